use serde::{Deserialize, Serialize};

use super::cost::{CostCurve, CostSpec};
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::scm::{Intervention, LinearScm};

/// Optimal intervention of one agent (or of every agent, when responses do
/// not depend on the agent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub a_star: Intervention,
    /// Score increase over not responding, `f(x̃) - f(x)`.
    pub achieved_score: f64,
    pub cost_used: f64,
    /// The score gradient vanished on every mutable coordinate, so any
    /// feasible intervention is optimal and the tie-break rule decided.
    #[serde(default)]
    pub degenerate: bool,
}

impl BestResponse {
    pub(crate) fn zero(n_features: usize) -> Self {
        Self {
            a_star: Intervention::zeros(n_features),
            achieved_score: 0.0,
            cost_used: 0.0,
            degenerate: true,
        }
    }
}

fn check_budget(b: f64) -> Result<()> {
    if b > 0.0 && b.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidCost(format!(
            "budget must be positive and finite, got {b}"
        )))
    }
}

fn feature_pullback(w: &[f64], scm: &LinearScm) -> Result<Vec<f64>> {
    let n = scm.n_features();
    if w.len() != n + 1 {
        return Err(Error::InvalidMechanism(format!(
            "{} weights for {} nodes",
            w.len(),
            n + 1
        )));
    }
    let g = scm.pullback(&nalgebra::DVector::from_column_slice(w));
    Ok(g.as_slice()[..n].to_vec())
}

/// Quadratic cost `0.5 sum C_jj a_j^2`: `a* = C^{-1} B^T w / λ` with
/// `λ = sqrt(w^T B C^{-1} B^T w / 2b)`. Infinite `C_jj` marks an immutable feature.
pub fn best_response_quadratic(w: &[f64], scm: &LinearScm, c_diag: &[f64], b: f64) -> Result<BestResponse> {
    check_budget(b)?;
    if c_diag.len() != scm.n_features() || c_diag.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::InvalidCost(
            "quadratic cost needs one positive C_jj per feature".into(),
        ));
    }
    let g = feature_pullback(w, scm)?;
    Ok(quadratic_response(&g, c_diag, b))
}

pub(crate) fn quadratic_response(g: &[f64], c_diag: &[f64], b: f64) -> BestResponse {
    let n = g.len();
    let q: f64 = g
        .iter()
        .zip(c_diag)
        .filter(|(_, c)| c.is_finite())
        .map(|(gj, c)| gj * gj / c)
        .sum();
    if !(q > 0.0) {
        return BestResponse::zero(n);
    }
    let lambda = (q / (2.0 * b)).sqrt();
    let a: Vec<f64> = g
        .iter()
        .zip(c_diag)
        .map(|(gj, c)| if c.is_finite() { gj / (c * lambda) } else { 0.0 })
        .collect();
    let cost = 0.5
        * a.iter()
            .zip(c_diag)
            .filter(|(_, c)| c.is_finite())
            .map(|(aj, c)| c * aj * aj)
            .sum::<f64>();
    BestResponse {
        a_star: Intervention::from_features(&a),
        achieved_score: q / lambda,
        cost_used: cost,
        degenerate: false,
    }
}

/// Linear cost `sum p_j |a_j|`: the whole budget goes to the coordinate with
/// the largest `|(B^T w)_j| / p_j`. Ties and the all-zero case go to the
/// lowest mutable index (with a positive sign when the gradient is zero).
pub fn best_response_linear_cost(w: &[f64], scm: &LinearScm, prices: &[f64], b: f64) -> Result<BestResponse> {
    check_budget(b)?;
    if prices.len() != scm.n_features() || prices.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::InvalidCost(
            "linear cost needs one positive price per feature".into(),
        ));
    }
    if !prices.iter().any(|p| p.is_finite()) {
        return Err(Error::InvalidCost("every feature is immutable".into()));
    }
    let g = feature_pullback(w, scm)?;
    Ok(linear_response(&g, prices, b))
}

pub(crate) fn linear_response(g: &[f64], prices: &[f64], b: f64) -> BestResponse {
    let mut best: Option<(usize, f64)> = None;
    for (j, (&gj, &p)) in g.iter().zip(prices).enumerate() {
        if !p.is_finite() {
            continue;
        }
        let ratio = gj.abs() / p;
        match best {
            Some((_, r)) if ratio <= r * (1.0 + 1e-12) + 1e-300 => {}
            _ => best = Some((j, ratio)),
        }
    }
    let (i, ratio) = best.expect("at least one finite price");
    let sign = if g[i] < 0.0 { -1.0 } else { 1.0 };
    let mut a = vec![0.0; g.len()];
    a[i] = sign * b / prices[i];
    BestResponse {
        a_star: Intervention::from_features(&a),
        achieved_score: ratio * b,
        cost_used: prices[i] * a[i].abs(),
        degenerate: ratio == 0.0,
    }
}

/// Response to an isolation mechanism `X_i - g_i(X_pa(i))`: the score moves
/// one-for-one with `a_i` only, so the agent spends the whole budget on `a_i`.
/// `x_natural` supplies the features a heterogeneous cost reads.
pub fn best_response_isolation(target: NodeId, cost: &CostSpec, b: f64, x_natural: &[f64]) -> Result<BestResponse> {
    check_budget(b)?;
    let n = cost.n_features();
    if target.0 >= n {
        return Err(Error::InvalidMechanism(format!(
            "isolation target {target} is not a feature"
        )));
    }
    let curves = cost.curves(x_natural);
    let curve = &curves[target.0];
    if matches!(curve, CostCurve::Immutable) {
        return Err(Error::Unsupported(format!("isolation target {target} is immutable")));
    }
    let t = curve.inverse(b);
    let mut a = vec![0.0; n];
    a[target.0] = t;
    Ok(BestResponse {
        a_star: Intervention::from_features(&a),
        achieved_score: t,
        cost_used: curve.value(t),
        degenerate: false,
    })
}
