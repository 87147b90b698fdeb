use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::agents::{linear_response, quadratic_response, BestResponse, CostSpec};
use crate::error::{Error, Result};
use crate::observe::InducedDistribution;
use crate::scm::LinearScm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskImprovement {
    pub risk: f64,
    pub improvement: f64,
    pub response: BestResponse,
}

/// `Var(w^T X - Y)` under `d`, with `w` over the features.
pub fn distribution_risk(d: &InducedDistribution, w: &[f64]) -> f64 {
    let v = residual_weights(w);
    let cov = d.cov();
    (cov * &v).dot(&v).max(0.0)
}

fn residual_weights(w: &[f64]) -> DVector<f64> {
    let mut v = DVector::zeros(w.len() + 1);
    v.rows_mut(0, w.len()).copy_from_slice(w);
    v[w.len()] = -1.0;
    v
}

/// `v^T Σ v` for a linear SCM, summed per noise term as `Σ_k (B^T v)_k^2 σ_k^2`
/// to avoid the cancellation of the covariance form.
pub fn linear_risk(scm: &LinearScm, w: &[f64]) -> f64 {
    let r = scm.total_effect().tr_mul(&residual_weights(w));
    r.iter()
        .zip(scm.noise_variance().iter())
        .map(|(rk, s)| rk * rk * s)
        .sum()
}

/// Closed-form risk and improvement of `f(x) = w^T x` on a linear SCM with a
/// homogeneous quadratic or linear cost. Shifts leave the covariance
/// unchanged, so the risk is `v^T Σ v` with `v = (w, -1)` and the
/// improvement is `(B a*)_Y`.
pub fn risk_improvement(w: &[f64], scm: &LinearScm, cost: &CostSpec, b: f64) -> Result<RiskImprovement> {
    let n = scm.n_features();
    if w.len() != n {
        return Err(Error::InvalidMechanism(format!("{} weights for {n} features", w.len())));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::InvalidCost(format!(
            "budget must be positive and finite, got {b}"
        )));
    }
    if cost.n_features() != n || cost.mutable_features().is_empty() {
        return Err(Error::InvalidCost(format!(
            "cost must cover {n} features with at least one mutable"
        )));
    }
    let mut wf = DVector::zeros(n + 1);
    wf.rows_mut(0, n).copy_from_slice(w);
    let g = scm.pullback(&wf);
    let g = &g.as_slice()[..n];
    let response = if let Some(c) = cost.quadratic_diag() {
        quadratic_response(g, &c, b)
    } else if let Some(p) = cost.linear_prices() {
        linear_response(g, &p, b)
    } else {
        return Err(Error::Unsupported(format!(
            "no closed-form response for {} cost",
            cost.class_name()
        )));
    };
    let risk = linear_risk(scm, w);
    let improvement = (scm.total_effect() * response.a_star.to_dvector())[n];
    Ok(RiskImprovement {
        risk,
        improvement,
        response,
    })
}

/// `risk - lambda * improvement` with its gradient in `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub risk: f64,
    pub improvement: f64,
}

/// Objective of the offline trade-off and its analytic gradient.
///
/// Quadratic cost: `a = sqrt(2b/q) C^{-1} g` with `g = B_nn^T w` and
/// `q = g^T C^{-1} g`, so `da/dg = sqrt(2b/q) (C^{-1} - h h^T / q)` with
/// `h = C^{-1} g`. Linear cost: the response is locally constant and the
/// improvement contributes no gradient.
pub fn objective_gradient(w: &[f64], scm: &LinearScm, cost: &CostSpec, b: f64, lambda: f64) -> Result<ObjectiveValue> {
    let n = scm.n_features();
    let ri = risk_improvement(w, scm, cost, b)?;
    let v = residual_weights(w);
    let sv = scm.covariance() * &v;
    let mut gradient: Vec<f64> = (0..n).map(|i| 2.0 * sv[i]).collect();
    if let Some(c) = cost.quadratic_diag() {
        let bt = scm.total_effect();
        let mut g = vec![0.0; n];
        for k in 0..n {
            g[k] = (0..n).map(|j| bt[(j, k)] * w[j]).sum();
        }
        let h: Vec<f64> = g
            .iter()
            .zip(&c)
            .map(|(gk, ck)| if ck.is_finite() { gk / ck } else { 0.0 })
            .collect();
        let q: f64 = g.iter().zip(&h).map(|(a, b)| a * b).sum();
        if q > 0.0 {
            let beta: Vec<f64> = (0..n).map(|k| bt[(n, k)]).collect();
            let s = (2.0 * b / q).sqrt();
            let hb: f64 = h.iter().zip(&beta).map(|(a, b)| a * b).sum();
            // da/dg^T beta
            let t: Vec<f64> = (0..n)
                .map(|k| {
                    let inv = if c[k].is_finite() { 1.0 / c[k] } else { 0.0 };
                    s * (beta[k] * inv - h[k] * hb / q)
                })
                .collect();
            // dg/dw^T t = B_nn t
            for (j, gj) in gradient.iter_mut().enumerate() {
                let di: f64 = (0..n).map(|k| bt[(j, k)] * t[k]).sum();
                *gj -= lambda * di;
            }
        }
    } else if cost.linear_prices().is_none() {
        return Err(Error::Unsupported(format!(
            "offline trade-off gradients need a quadratic or linear cost, got {}",
            cost.class_name()
        )));
    }
    Ok(ObjectiveValue {
        value: ri.risk - lambda * ri.improvement,
        gradient,
        risk: ri.risk,
        improvement: ri.improvement,
    })
}
