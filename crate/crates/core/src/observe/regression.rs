use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::distribution::InducedDistribution;
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::linalg;

/// Parametric family for conditional-expectation fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum RegressionFamily {
    Linear,
    /// Separable polynomial: powers `1..=degree` of every regressor.
    Polynomial {
        degree: usize,
    },
}

impl RegressionFamily {
    pub fn degree(self) -> usize {
        match self {
            RegressionFamily::Linear => 1,
            RegressionFamily::Polynomial { degree } => degree.max(1),
        }
    }
}

/// Fitted `E[target | regressors] = intercept + sum_p sum_k coef[p][k] x_p^(k+1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub target: NodeId,
    pub regressors: Vec<NodeId>,
    pub family: RegressionFamily,
    pub coefficients: Vec<Vec<f64>>,
    pub intercept: f64,
    /// Standard errors of the flattened coefficients (empirical fits only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standard_errors: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept_se: Option<f64>,
    /// Residual variance of the fit.
    pub residual_variance: f64,
}

/// Maximum condition number accepted for regressor second moments.
pub const MAX_CONDITION: f64 = 1e12;

impl RegressionModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut acc = self.intercept;
        for (p, c) in self.regressors.iter().zip(&self.coefficients) {
            let v = x[p.0];
            let mut pow = v;
            for &ck in c {
                acc += ck * pow;
                pow *= v;
            }
        }
        acc
    }

    /// Derivative with respect to the `k`-th regressor.
    pub fn partial(&self, k: usize, x: &[f64]) -> f64 {
        let v = x[self.regressors[k].0];
        let mut acc = 0.0;
        for (j, &cj) in self.coefficients[k].iter().enumerate().rev() {
            acc = acc * v + (j + 1) as f64 * cj;
        }
        acc
    }

    pub fn is_linear(&self) -> bool {
        self.coefficients.iter().all(|c| c.iter().skip(1).all(|&v| v == 0.0))
    }

    /// First-order coefficient of each regressor.
    pub fn linear_coefficients(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .map(|c| c.first().copied().unwrap_or(0.0))
            .collect()
    }

    pub fn flat_coefficients(&self) -> Vec<f64> {
        self.coefficients.iter().flatten().copied().collect()
    }
}

/// Least-squares fit of `target` on `regressors` within `family`.
///
/// Exact distributions only support the linear family; the coefficients are
/// `Sigma_MM^{-1} sigma_MV` and the intercept `mu_V - mu_M^T Sigma_MM^{-1} sigma_MV`.
pub fn fit_conditional(
    dist: &InducedDistribution,
    target: NodeId,
    regressors: &[NodeId],
    family: RegressionFamily,
) -> Result<RegressionModel> {
    if regressors.contains(&target) {
        return Err(Error::InvalidModel(format!(
            "target {target} listed among its own regressors"
        )));
    }
    let m = dist.node_count();
    for &v in regressors.iter().chain(std::iter::once(&target)) {
        if v.0 >= m {
            return Err(Error::UnknownNode(v));
        }
    }
    match dist {
        InducedDistribution::Exact { mean, cov, .. } => {
            if family.degree() > 1 {
                return Err(Error::Unsupported(
                    "polynomial regression needs an empirical distribution".into(),
                ));
            }
            let p = regressors.len();
            let s_mm = DMatrix::from_fn(p, p, |a, b| cov[(regressors[a].0, regressors[b].0)]);
            let s_mv = DVector::from_fn(p, |a, _| cov[(regressors[a].0, target.0)]);
            let beta = linalg::solve_spd(&s_mm, &s_mv, MAX_CONDITION)?;
            let mu_m = DVector::from_fn(p, |a, _| mean[regressors[a].0]);
            let intercept = mean[target.0] - mu_m.dot(&beta);
            let residual_variance = (cov[(target.0, target.0)] - s_mv.dot(&beta)).max(0.0);
            Ok(RegressionModel {
                target,
                regressors: regressors.to_vec(),
                family,
                coefficients: beta.iter().map(|&b| vec![b]).collect(),
                intercept,
                standard_errors: None,
                intercept_se: None,
                residual_variance,
            })
        }
        InducedDistribution::Empirical { samples, .. } => fit_samples(samples, target, regressors, family),
    }
}

fn fit_samples(
    samples: &DMatrix<f64>,
    target: NodeId,
    regressors: &[NodeId],
    family: RegressionFamily,
) -> Result<RegressionModel> {
    let n = samples.nrows();
    let d = family.degree();
    let p = regressors.len() * d;
    if n <= p + 1 {
        return Err(Error::InvalidModel(format!(
            "{n} samples cannot fit {} parameters",
            p + 1
        )));
    }
    // Centered design: column means of each power, then the normal
    // equations on the centered second moments.
    let col = |r: usize, j: usize| -> f64 {
        let v = samples[(r, regressors[j / d].0)];
        v.powi((j % d) as i32 + 1)
    };
    let mut means = vec![0.0; p];
    let mut y_mean = 0.0;
    for r in 0..n {
        for (j, m) in means.iter_mut().enumerate() {
            *m += col(r, j);
        }
        y_mean += samples[(r, target.0)];
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    y_mean /= n as f64;
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut yy = 0.0;
    let mut row = vec![0.0; p];
    for r in 0..n {
        for j in 0..p {
            row[j] = col(r, j) - means[j];
        }
        let yv = samples[(r, target.0)] - y_mean;
        yy += yv * yv;
        for a in 0..p {
            xty[a] += row[a] * yv;
            for b in a..p {
                xtx[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(a, b)] = xtx[(b, a)];
        }
    }
    // Scale to unit diagonal before solving to keep the conditioning check
    // meaningful for higher powers.
    let scale: Vec<f64> = (0..p).map(|j| xtx[(j, j)].sqrt().max(f64::MIN_POSITIVE)).collect();
    let scaled = DMatrix::from_fn(p, p, |a, b| xtx[(a, b)] / (scale[a] * scale[b]));
    let rhs = DVector::from_fn(p, |a, _| xty[a] / scale[a]);
    let z = linalg::solve_spd(&scaled, &rhs, MAX_CONDITION)?;
    let beta = DVector::from_fn(p, |a, _| z[a] / scale[a]);
    let sse = (yy - beta.dot(&xty)).max(0.0);
    let dof = (n - p - 1) as f64;
    let sigma2 = sse / dof;
    let inv_diag = scaled
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::SingularRegressors {
            condition: f64::INFINITY,
        })?;
    let se: Vec<f64> = (0..p).map(|a| (sigma2 * inv_diag[(a, a)]).sqrt() / scale[a]).collect();
    let intercept = y_mean - beta.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    // var(intercept) = sigma^2 / n + mbar^T cov(beta) mbar for a centered design
    let mut quad = 0.0;
    for a in 0..p {
        for c in 0..p {
            quad += means[a] / scale[a] * inv_diag[(a, c)] * means[c] / scale[c];
        }
    }
    let intercept_se = (sigma2 / n as f64 + sigma2 * quad).sqrt();
    let coefficients = (0..regressors.len())
        .map(|k| beta.as_slice()[k * d..(k + 1) * d].to_vec())
        .collect();
    Ok(RegressionModel {
        target,
        regressors: regressors.to_vec(),
        family,
        coefficients,
        intercept,
        standard_errors: Some(se),
        intercept_se: Some(intercept_se),
        residual_variance: sse / n as f64,
    })
}
