use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeId, OrientedGraph};

/// Cost of intervening on one feature:
/// `m(x) * sum_k coefficients[k-1] * |a|^k` with heterogeneity multiplier
/// `m(x) = 1 + sum_s gamma_s * x_s^2` over the `sources`.
/// An immutable feature has infinite cost for any nonzero change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeCost {
    #[serde(default)]
    pub coefficients: Vec<f64>,
    #[serde(default)]
    pub sources: Vec<(NodeId, f64)>,
    #[serde(default)]
    pub immutable: bool,
}

impl NodeCost {
    pub fn polynomial(coefficients: Vec<f64>) -> Self {
        Self {
            coefficients,
            sources: Vec::new(),
            immutable: false,
        }
    }

    /// `q * a^2`.
    pub fn quadratic(q: f64) -> Self {
        Self::polynomial(vec![0.0, q])
    }

    /// `p * |a|`; an infinite price makes the feature immutable.
    pub fn price(p: f64) -> Self {
        if p.is_infinite() {
            Self::immutable()
        } else {
            Self::polynomial(vec![p])
        }
    }

    pub fn immutable() -> Self {
        Self {
            coefficients: Vec::new(),
            sources: Vec::new(),
            immutable: true,
        }
    }

    pub fn with_sources(mut self, sources: Vec<(NodeId, f64)>) -> Self {
        self.sources = sources;
        self
    }

    pub fn multiplier(&self, x: &[f64]) -> f64 {
        self.sources.iter().fold(1.0, |acc, &(s, g)| acc + g * x[s.0] * x[s.0])
    }

    /// Base cost (multiplier 1) at `|a| = t`.
    pub fn base_value(&self, t: f64) -> f64 {
        if self.immutable {
            return if t == 0.0 { 0.0 } else { f64::INFINITY };
        }
        let t = t.abs();
        self.coefficients.iter().rev().fold(0.0, |acc, &c| (acc + c) * t)
    }

    /// Derivative of the base cost in `t = |a|`, for `t >= 0`.
    pub fn base_derivative(&self, t: f64) -> f64 {
        if self.immutable {
            return f64::INFINITY;
        }
        let mut acc = 0.0;
        for (j, &c) in self.coefficients.iter().enumerate().rev() {
            acc = acc * t + (j + 1) as f64 * c;
        }
        acc
    }

    fn base_second_derivative(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (j, &c) in self.coefficients.iter().enumerate().skip(1).rev() {
            acc = acc * t + ((j + 1) * j) as f64 * c;
        }
        acc
    }

    fn validate(&self, i: usize, n_features: usize) -> Result<()> {
        if self.immutable {
            return Ok(());
        }
        if self.coefficients.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidCost(format!(
                "feature {i}: coefficients must be finite and nonnegative"
            )));
        }
        if !self.coefficients.iter().any(|&c| c > 0.0) {
            return Err(Error::InvalidCost(format!(
                "feature {i}: cost must be strictly increasing (some positive coefficient)"
            )));
        }
        for &(s, g) in &self.sources {
            if s.0 > n_features {
                return Err(Error::UnknownNode(s));
            }
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::InvalidCost(format!("feature {i}: source weight must be >= 0")));
            }
        }
        Ok(())
    }

    pub(crate) fn shape(&self, multiplier: f64) -> CostCurve {
        if self.immutable {
            return CostCurve::Immutable;
        }
        let nz: Vec<usize> = (0..self.coefficients.len())
            .filter(|&k| self.coefficients[k] != 0.0)
            .collect();
        match nz.as_slice() {
            [0] => CostCurve::Linear(multiplier * self.coefficients[0]),
            [1] => CostCurve::Quadratic(multiplier * self.coefficients[1]),
            _ => CostCurve::General(self.coefficients.iter().map(|c| c * multiplier).collect()),
        }
    }
}

/// Per-agent cost curve for one coordinate with the multiplier folded in.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum CostCurve {
    Immutable,
    Linear(f64),
    Quadratic(f64),
    General(Vec<f64>),
}

impl CostCurve {
    pub fn value(&self, t: f64) -> f64 {
        let t = t.abs();
        match self {
            CostCurve::Immutable => {
                if t == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            CostCurve::Linear(p) => p * t,
            CostCurve::Quadratic(q) => q * t * t,
            CostCurve::General(c) => c.iter().rev().fold(0.0, |acc, &ck| (acc + ck) * t),
        }
    }

    /// Positive root of `value(t) = level`.
    pub fn inverse(&self, level: f64) -> f64 {
        match self {
            CostCurve::Immutable => 0.0,
            CostCurve::Linear(p) => level / p,
            CostCurve::Quadratic(q) => (level / q).sqrt(),
            CostCurve::General(_) => {
                let mut hi = 1.0;
                while self.value(hi) < level {
                    hi *= 2.0;
                }
                bisect(0.0, hi, |t| self.value(t) - level)
            }
        }
    }

    /// Minimizer over `t >= 0` of `0.5 (t - z)^2 + mu * value(t)` for `z >= 0`.
    pub fn prox(&self, z: f64, mu: f64) -> f64 {
        match self {
            CostCurve::Immutable => 0.0,
            CostCurve::Linear(p) => (z - mu * p).max(0.0),
            CostCurve::Quadratic(q) => z / (1.0 + 2.0 * mu * q),
            CostCurve::General(c) => {
                let d1 = |t: f64| {
                    let mut acc = 0.0;
                    for (j, &cj) in c.iter().enumerate().rev() {
                        acc = acc * t + (j + 1) as f64 * cj;
                    }
                    acc
                };
                let d2 = |t: f64| {
                    let mut acc = 0.0;
                    for (j, &cj) in c.iter().enumerate().skip(1).rev() {
                        acc = acc * t + ((j + 1) * j) as f64 * cj;
                    }
                    acc
                };
                if z <= mu * d1(0.0) {
                    return 0.0;
                }
                // h(t) = t + mu c'(t) - z is convex and increasing, and
                // h(z) >= 0, so Newton from the right converges monotonically.
                let mut t = z;
                for _ in 0..100 {
                    let h = t + mu * d1(t) - z;
                    let step = h / (1.0 + mu * d2(t));
                    let next = (t - step).max(0.0);
                    if (t - next).abs() <= 1e-15 * (1.0 + z) {
                        t = next;
                        break;
                    }
                    t = next;
                }
                t
            }
        }
    }
}

impl CostCurve {
    /// `value(prox(z, mu))` and its derivative in `mu`, for `z >= 0`.
    pub fn prox_spend(&self, z: f64, mu: f64) -> (f64, f64) {
        match self {
            CostCurve::Immutable => (0.0, 0.0),
            CostCurve::Linear(p) => {
                if z > mu * p {
                    (p * (z - mu * p), -p * p)
                } else {
                    (0.0, 0.0)
                }
            }
            CostCurve::Quadratic(q) => {
                let d = 1.0 + 2.0 * mu * q;
                (q * z * z / (d * d), -4.0 * q * q * z * z / (d * d * d))
            }
            CostCurve::General(c) => {
                let t = self.prox(z, mu);
                if t == 0.0 {
                    return (0.0, 0.0);
                }
                let mut d1 = 0.0;
                let mut d2 = 0.0;
                for (j, &cj) in c.iter().enumerate().rev() {
                    d1 = d1 * t + (j + 1) as f64 * cj;
                }
                for (j, &cj) in c.iter().enumerate().skip(1).rev() {
                    d2 = d2 * t + ((j + 1) * j) as f64 * cj;
                }
                // t + mu c'(t) = z  =>  dt/dmu = -c'(t) / (1 + mu c''(t))
                let dt = -d1 / (1.0 + mu * d2);
                (self.value(t), d1 * dt)
            }
        }
    }
}

pub(crate) fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Agent cost families over the `n` features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", content = "nodes", rename_all = "kebab-case")]
pub enum CostSpec {
    /// Zero marginal cost at the origin; sources restricted to `anc(i) ∪ {i}`.
    Class1Separable(Vec<NodeCost>),
    /// `c(a) = sum_i p_i |a_i|`.
    Linear(Vec<NodeCost>),
    /// Strictly increasing in `|a_i|`.
    Class2Separable(Vec<NodeCost>),
}

impl CostSpec {
    /// `c(a) = 0.5 sum_i c_diag[i] a_i^2`.
    pub fn quadratic(c_diag: &[f64]) -> Self {
        CostSpec::Class1Separable(c_diag.iter().map(|&c| NodeCost::quadratic(0.5 * c)).collect())
    }

    pub fn linear(prices: &[f64]) -> Self {
        CostSpec::Linear(prices.iter().map(|&p| NodeCost::price(p)).collect())
    }

    pub fn nodes(&self) -> &[NodeCost] {
        match self {
            CostSpec::Class1Separable(v) | CostSpec::Linear(v) | CostSpec::Class2Separable(v) => v,
        }
    }

    pub fn n_features(&self) -> usize {
        self.nodes().len()
    }

    pub fn class_name(&self) -> &'static str {
        match self {
            CostSpec::Class1Separable(_) => "class1-separable",
            CostSpec::Linear(_) => "linear",
            CostSpec::Class2Separable(_) => "class2-separable",
        }
    }

    /// True when no coordinate's cost depends on the agent's features.
    pub fn is_homogeneous(&self) -> bool {
        self.nodes().iter().all(|c| c.sources.is_empty())
    }

    pub fn mutable_features(&self) -> Vec<usize> {
        (0..self.n_features()).filter(|&i| !self.nodes()[i].immutable).collect()
    }

    /// Structural checks. When the generating graph is supplied, Class 1
    /// sources are checked against `anc(i) ∪ {i}`.
    pub fn validate(&self, n_features: usize, graph: Option<&OrientedGraph>) -> Result<()> {
        if self.n_features() != n_features {
            return Err(Error::InvalidCost(format!(
                "{} per-feature costs for {} features",
                self.n_features(),
                n_features
            )));
        }
        for (i, c) in self.nodes().iter().enumerate() {
            c.validate(i, n_features)?;
        }
        if self.mutable_features().is_empty() {
            return Err(Error::InvalidCost("every feature is immutable".into()));
        }
        match self {
            CostSpec::Class1Separable(nodes) => {
                for (i, c) in nodes.iter().enumerate() {
                    if c.immutable {
                        continue;
                    }
                    let h = 1e-6;
                    let marginal = (c.base_value(h) - c.base_value(0.0)) / h;
                    let marginal_neg = (c.base_value(-h) - c.base_value(0.0)) / h;
                    if marginal.abs() > 1e-4 || marginal_neg.abs() > 1e-4 {
                        return Err(Error::InvalidCost(format!(
                            "feature {i}: Class 1 cost needs zero marginal cost at 0, got {marginal:.3e}"
                        )));
                    }
                    if let Some(g) = graph {
                        let anc = g.ancestors(NodeId(i))?;
                        for &(s, _) in &c.sources {
                            if s.0 != i && !anc.contains(&s) {
                                return Err(Error::InvalidCost(format!(
                                    "feature {i}: Class 1 cost source {s} is not an ancestor"
                                )));
                            }
                        }
                    }
                }
            }
            CostSpec::Linear(nodes) => {
                for (i, c) in nodes.iter().enumerate() {
                    if !c.immutable && c.coefficients.iter().skip(1).any(|&v| v != 0.0) {
                        return Err(Error::InvalidCost(format!(
                            "feature {i}: linear cost has higher-order terms"
                        )));
                    }
                }
            }
            CostSpec::Class2Separable(_) => {}
        }
        Ok(())
    }

    /// Diagonal of `C` when the cost is `0.5 sum C_ii a_i^2` (infinite for
    /// immutable features) and homogeneous.
    pub fn quadratic_diag(&self) -> Option<Vec<f64>> {
        if !self.is_homogeneous() {
            return None;
        }
        self.nodes()
            .iter()
            .map(|c| match c.shape(1.0) {
                CostCurve::Immutable => Some(f64::INFINITY),
                CostCurve::Quadratic(q) => Some(2.0 * q),
                _ => None,
            })
            .collect()
    }

    /// Prices when every coordinate cost is `p_i |a_i|` and homogeneous.
    pub fn linear_prices(&self) -> Option<Vec<f64>> {
        if !self.is_homogeneous() {
            return None;
        }
        self.nodes()
            .iter()
            .map(|c| match c.shape(1.0) {
                CostCurve::Immutable => Some(f64::INFINITY),
                CostCurve::Linear(p) => Some(p),
                _ => None,
            })
            .collect()
    }

    /// Per-agent cost curves given the agent's natural feature values.
    pub(crate) fn curves(&self, x_natural: &[f64]) -> Vec<CostCurve> {
        self.nodes().iter().map(|c| c.shape(c.multiplier(x_natural))).collect()
    }

    /// Cost of `a` (features only) for an agent with natural values `x`.
    pub fn value(&self, a: &[f64], x_natural: &[f64]) -> f64 {
        self.nodes()
            .iter()
            .zip(a)
            .map(|(c, &ai)| c.multiplier(x_natural) * c.base_value(ai))
            .sum()
    }

    /// Whether node `i`'s curvature is positive everywhere off zero.
    pub fn is_strictly_convex(&self, i: usize) -> bool {
        let c = &self.nodes()[i];
        !c.immutable && c.base_second_derivative(1.0) > 0.0
    }
}
