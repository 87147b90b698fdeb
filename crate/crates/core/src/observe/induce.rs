use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::distribution::InducedDistribution;
use crate::agents::{closed_form_response, BestResponse, CostSpec, Mechanism, NumericOptions};
use crate::error::{Error, Result};
use crate::scm::{Intervention, StructuralModel};

/// How induced distributions are observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Mode {
    /// Population moments (linear SCM, linear mechanism, homogeneous cost).
    Exact,
    /// `count` simulated agents.
    Empirical { count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InduceOptions {
    pub mode: Mode,
    pub seed: u64,
    #[serde(default)]
    pub numeric: NumericOptions,
}

/// Per-agent optimal interventions for a population.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationResponse {
    /// One row per agent, `n + 1` columns (outcome column zero).
    pub interventions: DMatrix<f64>,
    /// Set when every agent shares the same response.
    pub shared: Option<BestResponse>,
    /// Agents whose numeric solve hit the iteration cap (best iterate used).
    pub nonconverged: usize,
    pub degenerate: usize,
}

/// Responses of the agents whose noise draws are the rows of `noise`.
pub fn population_response(
    scm: &StructuralModel,
    f: &Mechanism,
    cost: &CostSpec,
    b: f64,
    noise: &DMatrix<f64>,
    numeric: &NumericOptions,
) -> Result<PopulationResponse> {
    let m = scm.node_count();
    let n = scm.n_features();
    f.validate(n)?;
    let count = noise.nrows();
    let homogeneous_linear = scm.is_linear() && f.linear_weights(n).is_some() && cost.is_homogeneous();
    if f.is_zero() || homogeneous_linear {
        let shared = if f.is_zero() {
            BestResponse {
                a_star: Intervention::zeros(n),
                achieved_score: 0.0,
                cost_used: 0.0,
                degenerate: true,
            }
        } else {
            match closed_form_response(f, scm, cost, b, &vec![0.0; m])? {
                Some(br) => br,
                None => {
                    let u = noise.row(0).iter().copied().collect::<Vec<_>>();
                    crate::agents::best_response_numeric(f, scm, cost, b, &u, numeric)?
                }
            }
        };
        let a = shared.a_star.as_slice();
        let interventions = DMatrix::from_fn(count, m, |_, j| a[j]);
        let degenerate = if shared.degenerate { count } else { 0 };
        return Ok(PopulationResponse {
            interventions,
            shared: Some(shared),
            nonconverged: 0,
            degenerate,
        });
    }
    let mut interventions = DMatrix::zeros(count, m);
    let mut nonconverged = 0;
    let mut degenerate = 0;
    let mut warm: Option<Vec<f64>> = None;
    let mut u = vec![0.0; m];
    for r in 0..count {
        for j in 0..m {
            u[j] = noise[(r, j)];
        }
        let a = match closed_form_response(f, scm, cost, b, &u)? {
            Some(br) => {
                degenerate += br.degenerate as usize;
                br.a_star.features().to_vec()
            }
            None => {
                let mut problem = crate::agents::numeric_problem(f, scm, cost, b, &u);
                let warm_starts: Vec<Vec<f64>> = warm.iter().cloned().collect();
                match crate::agents::numeric_solve(&mut problem, &warm_starts, numeric) {
                    Ok(br) => {
                        degenerate += br.degenerate as usize;
                        br.a_star.features().to_vec()
                    }
                    Err(Error::NotConverged { best, .. }) => {
                        nonconverged += 1;
                        best
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        for (j, &v) in a.iter().enumerate() {
            interventions[(r, j)] = v;
        }
        warm = Some(a);
    }
    Ok(PopulationResponse {
        interventions,
        shared: None,
        nonconverged,
        degenerate,
    })
}

/// Distribution induced by deploying `f` to agents with cost `cost` and budget `b`.
pub fn induce(
    scm: &StructuralModel,
    f: &Mechanism,
    cost: &CostSpec,
    b: f64,
    opts: &InduceOptions,
) -> Result<InducedDistribution> {
    let n = scm.n_features();
    cost.validate(n, None)?;
    match opts.mode {
        Mode::Exact => {
            let lin = scm
                .as_linear()
                .ok_or_else(|| Error::Unsupported("exact mode needs a linear structural model".into()))?;
            if f.linear_weights(n).is_none() || !cost.is_homogeneous() {
                return Err(Error::Unsupported(
                    "exact mode needs a linear mechanism and a homogeneous cost".into(),
                ));
            }
            let br = if f.is_zero() {
                None
            } else {
                Some(
                    closed_form_response(f, scm, cost, b, &vec![0.0; n + 1])?.ok_or_else(|| {
                        Error::Unsupported(format!("exact mode has no closed form for {} cost", cost.class_name()))
                    })?,
                )
            };
            let a = br.map(|r| r.a_star).unwrap_or_else(|| Intervention::zeros(n));
            let (mean, cov) = lin.exact_moments(&a);
            let (mean0, _) = lin.exact_moments(&Intervention::zeros(n));
            Ok(InducedDistribution::exact(mean, cov, Some(&mean0)))
        }
        Mode::Empirical { count } => {
            if count < 2 {
                return Err(Error::InvalidModel("empirical mode needs at least 2 agents".into()));
            }
            let noise = scm.noise_matrix(count, opts.seed);
            let resp = population_response(scm, f, cost, b, &noise, &opts.numeric)?;
            let samples = apply_rows(scm, &noise, &resp.interventions);
            InducedDistribution::empirical(samples)
        }
    }
}

/// Propagate noise row `r` with intervention row `r`.
pub(crate) fn apply_rows(scm: &StructuralModel, noise: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    let m = scm.node_count();
    let mut out = DMatrix::zeros(noise.nrows(), m);
    let mut u = vec![0.0; m];
    let mut ar = vec![0.0; m];
    let mut x = vec![0.0; m];
    for r in 0..noise.nrows() {
        for j in 0..m {
            u[j] = noise[(r, j)];
            ar[j] = a[(r, j)];
        }
        scm.propagate_into(&u, &ar, &mut x);
        for j in 0..m {
            out[(r, j)] = x[j];
        }
    }
    out
}
