//! Structural causal models, noise sampling and soft interventions.

mod additive;
mod equation;
mod linear;
pub mod noise;

use std::io;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use additive::AdditiveScm;
pub use equation::{NodeEquation, StructuralFn};
pub use linear::LinearScm;
pub use noise::NoiseSpec;

use crate::error::{Error, Result};
use crate::graph::{node_name, NodeId, OrientedGraph};

/// Additive perturbation `a` over all `n + 1` nodes. The outcome entry is
/// always zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Intervention(Vec<f64>);

impl Intervention {
    pub fn zeros(n_features: usize) -> Self {
        Self(vec![0.0; n_features + 1])
    }

    /// From the `n` feature entries; appends the zero outcome entry.
    pub fn from_features(features: &[f64]) -> Self {
        let mut v = features.to_vec();
        v.push(0.0);
        Self(v)
    }

    /// From a full-length vector; rejects a nonzero outcome entry.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        match values.last() {
            None => Err(Error::InvalidModel("empty intervention".into())),
            Some(&y) if y != 0.0 => Err(Error::InvalidModel(format!(
                "intervention on the outcome node must be 0, got {y}"
            ))),
            Some(_) => Ok(Self(values)),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn features(&self) -> &[f64] {
        &self.0[..self.0.len() - 1]
    }

    pub fn n_features(&self) -> usize {
        self.0.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for Intervention {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Intervention> for Vec<f64> {
    fn from(a: Intervention) -> Self {
        a.0
    }
}

/// A structural causal model. Additive models whose functions are all
/// linear are stored in linear form.
#[derive(Debug, Clone, PartialEq)]
pub enum StructuralModel {
    Linear(LinearScm),
    Additive(AdditiveScm),
}

impl From<LinearScm> for StructuralModel {
    fn from(scm: LinearScm) -> Self {
        StructuralModel::Linear(scm)
    }
}

impl From<AdditiveScm> for StructuralModel {
    fn from(scm: AdditiveScm) -> Self {
        match scm.to_linear() {
            Some(lin) => StructuralModel::Linear(lin),
            None => StructuralModel::Additive(scm),
        }
    }
}

impl StructuralModel {
    pub fn n_features(&self) -> usize {
        match self {
            StructuralModel::Linear(s) => s.n_features(),
            StructuralModel::Additive(s) => s.n_features(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.n_features() + 1
    }

    pub fn y(&self) -> NodeId {
        NodeId(self.n_features())
    }

    pub fn graph(&self) -> &OrientedGraph {
        match self {
            StructuralModel::Linear(s) => s.graph(),
            StructuralModel::Additive(s) => s.graph(),
        }
    }

    pub fn order(&self) -> &[NodeId] {
        match self {
            StructuralModel::Linear(s) => s.order(),
            StructuralModel::Additive(s) => s.order(),
        }
    }

    pub fn noise(&self) -> &[NoiseSpec] {
        match self {
            StructuralModel::Linear(s) => s.noise(),
            StructuralModel::Additive(s) => s.noise(),
        }
    }

    pub fn as_linear(&self) -> Option<&LinearScm> {
        match self {
            StructuralModel::Linear(s) => Some(s),
            StructuralModel::Additive(_) => None,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, StructuralModel::Linear(_))
    }

    /// Per-node equations; linear models are expanded on the fly.
    pub fn equations(&self) -> Vec<NodeEquation> {
        match self {
            StructuralModel::Linear(s) => AdditiveScm::from_linear(s).equations().to_vec(),
            StructuralModel::Additive(s) => s.equations().to_vec(),
        }
    }

    /// `g'_v` at the given parent values, without noise.
    pub fn structural_value(&self, node: NodeId, parent_values: &[(NodeId, f64)]) -> Result<f64> {
        if node.0 >= self.node_count() {
            return Err(Error::UnknownNode(node));
        }
        let mut x = vec![0.0; self.node_count()];
        for &p in &self.graph().parents(node) {
            let value = parent_values
                .iter()
                .find(|(q, _)| *q == p)
                .map(|&(_, v)| v)
                .ok_or(Error::MissingParentValue { node, parent: p })?;
            x[p.0] = value;
        }
        Ok(self.mean_value(node.0, &x))
    }

    fn mean_value(&self, v: usize, x: &[f64]) -> f64 {
        match self {
            StructuralModel::Linear(s) => {
                let a = s.weights();
                (0..x.len()).fold(s.intercepts()[v], |acc, k| acc + a[(v, k)] * x[k])
            }
            StructuralModel::Additive(s) => s.equations()[v].value(x),
        }
    }

    /// Node values for noise `u` and intervention `a`, written into `x`.
    pub fn propagate_into(&self, u: &[f64], a: &[f64], x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = 0.0);
        for &v in self.order() {
            let j = v.0;
            x[j] = self.mean_value(j, x) + u[j] + a[j];
        }
    }

    pub fn propagate(&self, u: &[f64], a: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.node_count()];
        self.propagate_into(u, a, &mut x);
        x
    }

    /// Reverse-mode derivative: given `df/dx` at the node values `x`, returns
    /// `df/da` (the total derivative through all downstream effects).
    pub fn pullback(&self, x: &[f64], df_dx: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; df_dx.len()];
        self.pullback_into(x, df_dx, &mut out);
        out
    }

    pub fn pullback_into(&self, x: &[f64], df_dx: &[f64], out: &mut [f64]) {
        match self {
            StructuralModel::Linear(s) => {
                let b = s.total_effect();
                for (k, o) in out.iter_mut().enumerate() {
                    *o = b.column(k).iter().zip(df_dx).map(|(bjk, d)| bjk * d).sum();
                }
            }
            StructuralModel::Additive(s) => {
                out.copy_from_slice(df_dx);
                for &v in s.order().iter().rev() {
                    let eq = &s.equations()[v.0];
                    let av = out[v.0];
                    if av == 0.0 {
                        continue;
                    }
                    for (k, p) in eq.parents.iter().enumerate() {
                        out[p.0] += av * eq.partial(k, x);
                    }
                }
            }
        }
    }

    /// One noise draw per node, in index order.
    pub fn draw_noise<R: rand::Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (slot, spec) in out.iter_mut().zip(self.noise()) {
            *slot = spec.sample(rng);
        }
    }

    /// `count x (n + 1)` matrix of exogenous draws. The same seed always
    /// gives the same noise, whatever intervention is applied afterwards.
    pub fn noise_matrix(&self, count: usize, seed: u64) -> DMatrix<f64> {
        let m = self.node_count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = DMatrix::zeros(count, m);
        let mut u = vec![0.0; m];
        for r in 0..count {
            self.draw_noise(&mut rng, &mut u);
            for j in 0..m {
                out[(r, j)] = u[j];
            }
        }
        out
    }

    /// Rows `(x_1..x_n, y)` under a common intervention.
    pub fn sample(&self, count: usize, intervention: &Intervention, seed: u64) -> Result<DMatrix<f64>> {
        if count == 0 {
            return Err(Error::InvalidModel("sample count must be at least 1".into()));
        }
        if intervention.n_features() != self.n_features() {
            return Err(Error::InvalidModel(format!(
                "intervention has {} features, model has {}",
                intervention.n_features(),
                self.n_features()
            )));
        }
        let noise = self.noise_matrix(count, seed);
        Ok(self.apply(&noise, |_| intervention.as_slice()))
    }

    /// Propagate each noise row with a per-row intervention.
    pub fn apply<'a>(&self, noise: &DMatrix<f64>, a_for_row: impl Fn(usize) -> &'a [f64]) -> DMatrix<f64> {
        let m = self.node_count();
        let mut out = DMatrix::zeros(noise.nrows(), m);
        let mut u = vec![0.0; m];
        let mut x = vec![0.0; m];
        for r in 0..noise.nrows() {
            for j in 0..m {
                u[j] = noise[(r, j)];
            }
            self.propagate_into(&u, a_for_row(r), &mut x);
            for j in 0..m {
                out[(r, j)] = x[j];
            }
        }
        out
    }
}

/// Write samples as CSV with header `x1..xn,y`.
pub fn write_samples_csv<W: io::Write>(writer: W, samples: &DMatrix<f64>) -> Result<()> {
    let n_features = samples.ncols().saturating_sub(1);
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = (0..samples.ncols()).map(|j| node_name(n_features, NodeId(j))).collect();
    w.write_record(&header)?;
    for r in 0..samples.nrows() {
        w.write_record(samples.row(r).iter().map(|v| format!("{v}")))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_x1_y(noise_var: f64) -> StructuralModel {
        let noise = vec![
            NoiseSpec::Gaussian {
                mean: 0.0,
                variance: noise_var
            };
            2
        ];
        LinearScm::from_edges(1, &[(NodeId(0), NodeId(1), 1.0)], noise)
            .unwrap()
            .into()
    }

    #[test]
    fn deterministic_chain_copies_parent() {
        let scm = chain_x1_y(0.0);
        let noise = vec![
            NoiseSpec::Gaussian {
                mean: 0.0,
                variance: 1.0,
            },
            NoiseSpec::Gaussian {
                mean: 0.0,
                variance: 0.0,
            },
        ];
        let scm2: StructuralModel = LinearScm::from_edges(1, &[(NodeId(0), NodeId(1), 1.0)], noise)
            .unwrap()
            .into();
        for s in [scm, scm2] {
            let x = s.sample(50, &Intervention::zeros(1), 3).unwrap();
            for r in 0..50 {
                assert_eq!(x[(r, 1)], x[(r, 0)]);
            }
        }
    }

    #[test]
    fn shift_propagates_exactly_with_common_seed() {
        let scm = chain_x1_y(1.0);
        let x0 = scm.sample(100, &Intervention::zeros(1), 9).unwrap();
        let x1 = scm.sample(100, &Intervention::from_features(&[1.0]), 9).unwrap();
        for r in 0..100 {
            assert!((x1[(r, 1)] - x0[(r, 1)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn outcome_intervention_rejected() {
        assert!(Intervention::new(vec![1.0, 0.5]).is_err());
        assert!(serde_json::from_str::<Intervention>("[1.0, 2.0]").is_err());
        assert!(serde_json::from_str::<Intervention>("[1.0, 0.0]").is_ok());
    }

    #[test]
    fn structural_value_linear_and_polynomial() {
        let eq = NodeEquation::linear(vec![NodeId(0), NodeId(1)], vec![0.5, -1.0]);
        let scm = AdditiveScm::new(
            2,
            vec![NodeEquation::root(), NodeEquation::root(), eq],
            vec![NoiseSpec::standard_normal(); 3],
        )
        .unwrap();
        let scm = StructuralModel::from(scm);
        assert!(scm.is_linear());
        let v = scm
            .structural_value(NodeId(2), &[(NodeId(0), 2.0), (NodeId(1), 1.0)])
            .unwrap();
        assert_eq!(v, 0.0);
        assert!(matches!(
            scm.structural_value(NodeId(2), &[(NodeId(0), 2.0)]),
            Err(Error::MissingParentValue { .. })
        ));

        let sq = NodeEquation::polynomial(vec![NodeId(0)], vec![vec![0.0, 1.0]]);
        let poly = StructuralModel::from(
            AdditiveScm::new(1, vec![NodeEquation::root(), sq], vec![NoiseSpec::standard_normal(); 2]).unwrap(),
        );
        assert!(!poly.is_linear());
        assert_eq!(poly.structural_value(NodeId(1), &[(NodeId(0), 3.0)]).unwrap(), 9.0);
    }

    #[test]
    fn pullback_matches_finite_differences() {
        let eqs = vec![
            NodeEquation::root(),
            NodeEquation::polynomial(vec![NodeId(0)], vec![vec![0.5, -0.3, 0.2]]),
            NodeEquation::polynomial(vec![NodeId(0), NodeId(1)], vec![vec![1.0], vec![0.4, 0.1]]),
        ];
        let scm = StructuralModel::from(AdditiveScm::new(2, eqs, vec![NoiseSpec::standard_normal(); 3]).unwrap());
        let u = [0.3, -0.8, 0.1];
        let a = [0.2, 0.5, 0.0];
        let f = |a: &[f64]| {
            let x = scm.propagate(&u, a);
            x[2] + 0.5 * x[1]
        };
        let x = scm.propagate(&u, &a);
        let g = scm.pullback(&x, &[0.0, 0.5, 1.0]);
        for j in 0..2 {
            let h = 1e-6;
            let mut ap = a;
            let mut am = a;
            ap[j] += h;
            am[j] -= h;
            let fd = (f(&ap) - f(&am)) / (2.0 * h);
            assert!((g[j] - fd).abs() < 1e-6, "coord {j}: {} vs {fd}", g[j]);
        }
    }

    #[test]
    fn csv_header_names_nodes() {
        let scm = chain_x1_y(1.0);
        let x = scm.sample(2, &Intervention::zeros(1), 0).unwrap();
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &x).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x1,y\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
