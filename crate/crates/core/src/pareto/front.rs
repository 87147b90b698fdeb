use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::objective::objective_gradient;
use super::{pareto_filter, Front, ParetoPoint};
use crate::agents::CostSpec;
use crate::error::Result;
use crate::linalg;
use crate::scm::LinearScm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontOptions {
    pub lambdas: Vec<f64>,
    pub starts: usize,
    pub max_iterations: usize,
    /// Stop when the gradient norm is below `tolerance * (1 + |objective|)`.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for FrontOptions {
    fn default() -> Self {
        Self {
            lambdas: default_lambda_grid(),
            starts: 16,
            max_iterations: 2000,
            tolerance: 1e-8,
            seed: 0,
        }
    }
}

/// 33 log-spaced values from `1e-3` to `1e3`.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..33).map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / 32.0)).collect()
}

/// Best local solution found for one trade-off weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRun {
    pub lambda: f64,
    pub w: Vec<f64>,
    pub risk: f64,
    pub improvement: f64,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontReport {
    pub front: Front,
    pub runs: Vec<LambdaRun>,
}

/// Trade-off front of an identified linear SCM with a known cost, computed
/// without deployments: minimize `risk(w) - lambda * improvement(w)` for each
/// `lambda` from several starts (previous solution, least squares, the
/// outcome's structural weights, random draws), then keep the non-dominated
/// points. Runs that do not converge are reported and left off the front.
pub fn offline_front(scm: &LinearScm, cost: &CostSpec, b: f64, opts: &FrontOptions) -> Result<FrontReport> {
    let n = scm.n_features();
    let cov = scm.covariance();
    let sxx = cov.view((0, 0), (n, n)).into_owned();
    let sxy = cov.view((0, n), (n, 1)).column(0).into_owned();
    let ls = linalg::solve_spd(&sxx, &sxy, 1e14)
        .ok()
        .map(|v| v.iter().copied().collect::<Vec<_>>());
    let structural: Vec<f64> = (0..n).map(|k| scm.weights()[(n, k)]).collect();
    let scale = ls
        .as_ref()
        .map(|w| w.iter().map(|v| v * v).sum::<f64>().sqrt())
        .unwrap_or(1.0)
        .max(1.0);

    let mut runs = Vec::with_capacity(opts.lambdas.len());
    let mut warm: Option<Vec<f64>> = None;
    for (idx, &lambda) in opts.lambdas.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(idx as u64));
        let mut starts: Vec<Vec<f64>> = Vec::new();
        starts.extend(warm.clone());
        starts.extend(ls.clone());
        if structural.iter().any(|&v| v != 0.0) {
            starts.push(structural.clone());
        }
        while starts.len() < opts.starts.max(1) {
            starts.push(
                (0..n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        scale * z
                    })
                    .collect(),
            );
        }
        let mut best: Option<LambdaRun> = None;
        for x0 in starts.iter().take(opts.starts.max(1)) {
            let run = minimize(|w| objective_gradient(w, scm, cost, b, lambda), x0, opts)?;
            let better = match &best {
                None => true,
                Some(cur) => {
                    (run.converged && !cur.converged)
                        || (run.converged == cur.converged && run.objective < cur.objective)
                }
            };
            if better {
                best = Some(LambdaRun { lambda, ..run });
            }
        }
        let best = best.expect("at least one start");
        if best.converged {
            warm = Some(best.w.clone());
        }
        runs.push(best);
    }
    let points = runs
        .iter()
        .filter(|r| r.converged)
        .map(|r| ParetoPoint {
            w: r.w.clone(),
            risk: r.risk,
            improvement: r.improvement,
        })
        .collect();
    Ok(FrontReport {
        front: pareto_filter(points),
        runs,
    })
}

/// BFGS with Armijo backtracking.
fn minimize<F>(f: F, x0: &[f64], opts: &FrontOptions) -> Result<LambdaRun>
where
    F: Fn(&[f64]) -> Result<super::ObjectiveValue>,
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut cur = f(x.as_slice())?;
    let mut g = DVector::from_vec(cur.gradient.clone());
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..opts.max_iterations {
        iterations = it;
        if g.norm() <= opts.tolerance * (1.0 + cur.value.abs()) {
            converged = true;
            break;
        }
        let mut p = -(&hinv * &g);
        let mut slope = g.dot(&p);
        if slope >= 0.0 {
            hinv = DMatrix::identity(n, n);
            p = -g.clone();
            slope = g.dot(&p);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + t * &p;
            let next = f(xn.as_slice())?;
            if next.value <= cur.value + 1e-4 * t * slope {
                accepted = Some((xn, next));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, next)) = accepted else {
            // No decrease along a descent direction: at numerical precision.
            converged = g.norm() <= 1e-6 * (1.0 + cur.value.abs());
            break;
        };
        let gn = DVector::from_vec(next.gradient.clone());
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let left = &i - rho * &s * y.transpose();
            let right = &i - rho * &y * s.transpose();
            hinv = &left * &hinv * &right + rho * &s * s.transpose();
        } else {
            hinv = DMatrix::identity(n, n);
        }
        let flat = (cur.value - next.value).abs() <= 1e-16 * (1.0 + cur.value.abs());
        x = xn;
        g = gn;
        cur = next;
        if flat && g.norm() <= 1e-6 * (1.0 + cur.value.abs()) {
            converged = true;
            break;
        }
    }
    Ok(LambdaRun {
        lambda: 0.0,
        w: x.iter().copied().collect(),
        risk: cur.risk,
        improvement: cur.improvement,
        objective: cur.value,
        converged,
        iterations,
        gradient_norm: g.norm(),
    })
}
