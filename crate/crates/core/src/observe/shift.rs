use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::distribution::InducedDistribution;
use super::regression::{fit_conditional, RegressionFamily, MAX_CONDITION};
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::linalg;

/// Decision thresholds for the shift tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestOptions {
    /// Absolute tolerance when both distributions are exact.
    pub exact_tol: f64,
    /// z-statistic threshold when either distribution is empirical.
    pub z_threshold: f64,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self {
            exact_tol: 1e-7,
            z_threshold: 4.0,
        }
    }
}

/// Outcome of one shift test. `statistic` is an absolute difference for
/// exact inputs and a z-statistic otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftTest {
    pub shifted: bool,
    pub statistic: f64,
    pub threshold: f64,
}

/// Does the conditional law of `target` given `given` differ between `d_i`
/// and `d_0`?
///
/// Exact inputs compare the linear intercepts: under a mean shift with fixed
/// covariance only the intercept can move. Empirical inputs fit `family` on
/// both and take the largest z-statistic over the intercept and every
/// coefficient.
pub fn conditional_shift_test(
    d_i: &InducedDistribution,
    d_0: &InducedDistribution,
    target: NodeId,
    given: &[NodeId],
    family: RegressionFamily,
    opts: &TestOptions,
) -> Result<ShiftTest> {
    if d_i.node_count() != d_0.node_count() {
        return Err(Error::InvalidModel("distributions cover different node sets".into()));
    }
    if d_i == d_0 {
        return Ok(ShiftTest {
            shifted: false,
            statistic: 0.0,
            threshold: threshold(d_i, d_0, opts),
        });
    }
    let exact = d_i.is_exact() && d_0.is_exact();
    let fam = if exact { RegressionFamily::Linear } else { family };
    let fit_i = fit_conditional(d_i, target, given, fam)?;
    let fit_0 = fit_conditional(d_0, target, given, fam)?;
    if exact {
        let statistic = (fit_i.intercept - fit_0.intercept).abs();
        return Ok(ShiftTest {
            shifted: statistic > opts.exact_tol,
            statistic,
            threshold: opts.exact_tol,
        });
    }
    let se = |m: &super::RegressionModel, k: Option<usize>| -> f64 {
        match k {
            None => m.intercept_se.unwrap_or(0.0),
            Some(k) => m.standard_errors.as_ref().map(|s| s[k]).unwrap_or(0.0),
        }
    };
    let mut statistic = z(fit_i.intercept - fit_0.intercept, se(&fit_i, None), se(&fit_0, None));
    let (ci, c0) = (fit_i.flat_coefficients(), fit_0.flat_coefficients());
    for k in 0..ci.len() {
        statistic = statistic.max(z(ci[k] - c0[k], se(&fit_i, Some(k)), se(&fit_0, Some(k))));
    }
    Ok(ShiftTest {
        shifted: statistic > opts.z_threshold,
        statistic,
        threshold: opts.z_threshold,
    })
}

fn z(diff: f64, se_a: f64, se_b: f64) -> f64 {
    let s = (se_a * se_a + se_b * se_b).sqrt();
    if s > 0.0 {
        diff.abs() / s
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn threshold(a: &InducedDistribution, b: &InducedDistribution, opts: &TestOptions) -> f64 {
    if a.is_exact() && b.is_exact() {
        opts.exact_tol
    } else {
        opts.z_threshold
    }
}

/// Does `E[V]` differ between `d` and `d_0`? Welch z-statistic when either
/// side is empirical.
pub fn mean_shift_test(
    d: &InducedDistribution,
    d_0: &InducedDistribution,
    v: NodeId,
    opts: &TestOptions,
) -> Result<ShiftTest> {
    if d.node_count() != d_0.node_count() {
        return Err(Error::InvalidModel("distributions cover different node sets".into()));
    }
    if v.0 >= d.node_count() {
        return Err(Error::UnknownNode(v));
    }
    let diff = d.mean()[v.0] - d_0.mean()[v.0];
    if d.is_exact() && d_0.is_exact() {
        let statistic = diff.abs();
        return Ok(ShiftTest {
            shifted: statistic > opts.exact_tol,
            statistic,
            threshold: opts.exact_tol,
        });
    }
    let statistic = z(diff, d.mean_variance(v.0).sqrt(), d_0.mean_variance(v.0).sqrt());
    Ok(ShiftTest {
        shifted: statistic > opts.z_threshold,
        statistic,
        threshold: opts.z_threshold,
    })
}

/// Faithfulness check for the intercept test: the intercept of `V` given
/// `M` moves by `Δ_V - Δ_M^T Σ^{-1} σ_MV`, so a shift is visible only if
/// that quantity is nonzero. Returns `true` (faithful) when it exceeds `tol`.
pub fn faithfulness_diagnostic(
    delta_m: &DVector<f64>,
    sigma: &DMatrix<f64>,
    sigma_mv: &DVector<f64>,
    delta_v: f64,
    tol: f64,
) -> Result<bool> {
    let p = delta_m.len();
    if sigma.shape() != (p, p) || sigma_mv.len() != p {
        return Err(Error::InvalidModel("faithfulness diagnostic dimension mismatch".into()));
    }
    let beta = linalg::solve_spd(sigma, sigma_mv, MAX_CONDITION)?;
    Ok((delta_v - delta_m.dot(&beta)).abs() > tol)
}
