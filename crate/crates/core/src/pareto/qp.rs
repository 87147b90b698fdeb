use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Constraints in the final working set.
    pub active: Vec<usize>,
    /// One multiplier per constraint (zero off the working set).
    pub multipliers: Vec<f64>,
    /// Largest violation of stationarity, feasibility, dual feasibility or
    /// complementarity, scaled by the problem size.
    pub kkt_residual: f64,
    pub iterations: usize,
}

const MAX_ITERATIONS: usize = 10_000;

/// Primal active-set method for `min 0.5 x^T H x + c^T x` subject to
/// `G x >= d`, with `H` positive definite and `x0` feasible.
///
/// Blocking constraints enter the working set one at a time (lowest index
/// on ties) and the constraint with the most negative multiplier leaves.
pub fn solve_qp(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    g: &DMatrix<f64>,
    d: &DVector<f64>,
    x0: &DVector<f64>,
) -> Result<QpSolution> {
    let n = h.nrows();
    let m = g.nrows();
    if h.ncols() != n || c.len() != n || x0.len() != n || (m > 0 && g.ncols() != n) || d.len() != m {
        return Err(Error::InvalidModel("quadratic program dimensions disagree".into()));
    }
    let scale = 1.0 + h.amax() + c.amax() + g.amax() + d.amax();
    let tol = 1e-12 * scale;
    let slack = g * x0 - d;
    if slack.iter().any(|&s| s < -1e-9 * scale) {
        return Err(Error::QpFailure("infeasible at the starting point".into()));
    }
    let mut x = x0.clone();
    let mut work: Vec<usize> = Vec::new();
    for it in 0..MAX_ITERATIONS {
        let grad = h * &x + c;
        let (p, mu) = eqp_step(h, &grad, g, &work)?;
        if p.amax() <= 1e-13 * (1.0 + x.amax()) {
            let most_negative = mu
                .iter()
                .enumerate()
                .filter(|(_, &v)| v < -tol)
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(k, _)| k);
            match most_negative {
                None => return Ok(finish(h, c, g, d, x, work, mu, it)),
                Some(k) => {
                    work.remove(k);
                }
            }
            continue;
        }
        let gp = g * &p;
        let gx = g * &x;
        let mut alpha = 1.0;
        let mut block = None;
        for j in 0..m {
            if work.contains(&j) || gp[j] >= -tol * 1e-3 {
                continue;
            }
            let step = ((d[j] - gx[j]) / gp[j]).max(0.0);
            if step < alpha {
                alpha = step;
                block = Some(j);
            }
        }
        x += alpha * &p;
        if let Some(j) = block {
            work.push(j);
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::QpFailure("unbounded".into()));
        }
    }
    Err(Error::QpFailure(format!(
        "not solved within {MAX_ITERATIONS} active-set iterations"
    )))
}

/// Solve the equality-constrained step
/// `[H  -G_W^T; G_W  0] [p; mu] = [-grad; 0]`.
fn eqp_step(
    h: &DMatrix<f64>,
    grad: &DVector<f64>,
    g: &DMatrix<f64>,
    work: &[usize],
) -> Result<(DVector<f64>, Vec<f64>)> {
    let n = h.nrows();
    let k = work.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(h);
    for (r, &j) in work.iter().enumerate() {
        for i in 0..n {
            kkt[(i, n + r)] = -g[(j, i)];
            kkt[(n + r, i)] = g[(j, i)];
        }
    }
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(-grad));
    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::QpFailure("singular KKT system (dependent working set or indefinite H)".into()))?;
    let p = sol.rows(0, n).into_owned();
    let mu = sol.rows(n, k).iter().copied().collect();
    Ok((p, mu))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    g: &DMatrix<f64>,
    d: &DVector<f64>,
    x: DVector<f64>,
    work: Vec<usize>,
    mu_work: Vec<f64>,
    iterations: usize,
) -> QpSolution {
    let m = g.nrows();
    let mut multipliers = vec![0.0; m];
    for (&j, &v) in work.iter().zip(&mu_work) {
        multipliers[j] = v;
    }
    let mu = DVector::from_vec(multipliers.clone());
    let stationarity = (h * &x + c - g.transpose() * &mu).amax();
    let slack = g * &x - d;
    let primal = slack.iter().map(|s| (-s).max(0.0)).fold(0.0, f64::max);
    let dual = multipliers.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
    let comp = slack
        .iter()
        .zip(&multipliers)
        .map(|(s, v)| (s * v).abs())
        .fold(0.0, f64::max);
    let scale = 1.0 + c.amax() + h.amax() * x.amax();
    let objective = 0.5 * (h * &x).dot(&x) + c.dot(&x);
    QpSolution {
        x: x.iter().copied().collect(),
        objective,
        active: work,
        multipliers,
        kkt_residual: stationarity.max(primal).max(dual).max(comp) / scale,
        iterations,
    }
}
