use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::qp::{solve_qp, QpSolution};
use super::{distribution_risk, pareto_filter, Front, ParetoPoint};
use crate::agents::Mechanism;
use crate::discovery::Environment;
use crate::error::{Error, Result};
use crate::linalg;
use crate::observe::{InducedDistribution, TestOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExploreOptions {
    /// Distribution equality is mean proximity under these tolerances.
    pub tests: TestOptions,
    /// Singular values of `W W^T` below this fraction of the largest are zero.
    pub rank_tol: f64,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        Self {
            tests: TestOptions::default(),
            rank_tol: 1e-9,
        }
    }
}

/// One distinct induced distribution and the mechanism that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub probe: Vec<f64>,
    pub distribution: InducedDistribution,
    /// Mean minus the estimated natural mean, all nodes.
    pub shift: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterventionCatalog {
    pub entries: Vec<CatalogEntry>,
    /// Accumulated shift and probe vectors (the matrix whose nullspace
    /// yields the next probe), one per row.
    pub w: Vec<Vec<f64>>,
    pub natural_mean: DVector<f64>,
    pub deployments: usize,
    /// Probes whose distribution had been seen already.
    pub duplicates: usize,
}

/// Elicit every distribution inducible under a linear SCM with linear cost.
///
/// Deploys `±x_1`, averages the two means to get the natural mean, then
/// repeatedly deploys `±w` for a `w` orthogonal to everything in `W`. A
/// repeated distribution, or a pair whose two signs induce the same
/// distribution, adds `w` to `W`; a new one adds its shift and both signed
/// distributions to the catalog. When `x_1` reaches no mutable feature both
/// signs fall to the tie-break intervention, the average is not the natural
/// mean, and `natural()` is read instead. Stops at
/// `2 k` distributions (`k` mutable features) or after `n - 1` further
/// probes, so at most `2 n` deployments are used. Only `k` is read from the
/// cost.
pub fn explore_linear<E: Environment>(
    env: &mut E,
    mutable: usize,
    opts: &ExploreOptions,
) -> Result<InterventionCatalog> {
    let n = env.n_features();
    if mutable == 0 || mutable > n {
        return Err(Error::InvalidCost(format!("{mutable} mutable features out of {n}")));
    }
    let start = env.deployments();
    let mut e1 = vec![0.0; n];
    e1[0] = 1.0;
    let d_plus = env.deploy(&Mechanism::linear(&e1))?;
    let d_minus = env.deploy(&Mechanism::linear(&neg(&e1)))?;
    let degenerate = same_distribution(&d_plus, &d_minus, &opts.tests);
    let natural_mean = if degenerate {
        env.natural()?.mean().clone()
    } else {
        (d_plus.mean() + d_minus.mean()) * 0.5
    };
    let mut catalog = InterventionCatalog {
        entries: Vec::new(),
        w: Vec::new(),
        natural_mean,
        deployments: 0,
        duplicates: 0,
    };
    if degenerate {
        catalog.w.push(e1);
        catalog.duplicates += 1;
    } else {
        catalog
            .w
            .push((d_plus.mean() - d_minus.mean()).rows(0, n).iter().copied().collect());
        catalog.push(e1.clone(), d_plus);
        catalog.push(neg(&e1), d_minus);
    }
    for _ in 2..=n {
        if catalog.entries.len() >= 2 * mutable {
            break;
        }
        let wmat = DMatrix::from_fn(n, catalog.w.len(), |r, c| catalog.w[c][r]);
        let null = linalg::nullspace_of_transpose(&wmat, opts.rank_tol);
        if null.ncols() == 0 {
            return Err(Error::Invariant(
                "probe nullspace is empty before every distribution was seen".into(),
            ));
        }
        let probe: Vec<f64> = null.column(0).iter().copied().collect();
        let d_pos = env.deploy(&Mechanism::linear(&probe))?;
        let d_neg = env.deploy(&Mechanism::linear(&neg(&probe)))?;
        let seen = same_distribution(&d_pos, &d_neg, &opts.tests)
            || catalog
                .entries
                .iter()
                .any(|e| same_distribution(&e.distribution, &d_pos, &opts.tests));
        if seen {
            catalog.w.push(probe);
            catalog.duplicates += 1;
        } else {
            let shift: Vec<f64> = (d_pos.mean() - &catalog.natural_mean)
                .rows(0, n)
                .iter()
                .copied()
                .collect();
            catalog.w.push(shift);
            catalog.push(probe.clone(), d_pos);
            catalog.push(neg(&probe), d_neg);
        }
    }
    catalog.deployments = env.deployments() - start;
    Ok(catalog)
}

impl InterventionCatalog {
    fn push(&mut self, probe: Vec<f64>, distribution: InducedDistribution) {
        let shift = distribution.mean() - &self.natural_mean;
        self.entries.push(CatalogEntry {
            probe,
            distribution,
            shift,
        });
    }

    pub fn n_features(&self) -> usize {
        self.natural_mean.len() - 1
    }
}

fn neg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| -x).collect()
}

/// Means agree within `exact_tol` (relative) for exact inputs, or every
/// coordinate's Welch z-statistic stays under the threshold.
fn same_distribution(a: &InducedDistribution, b: &InducedDistribution, tests: &TestOptions) -> bool {
    let diff = a.mean() - b.mean();
    if a.is_exact() && b.is_exact() {
        let scale = 1.0 + a.mean().amax().max(b.mean().amax());
        return diff.amax() <= tests.exact_tol * scale;
    }
    (0..diff.len()).all(|v| {
        let se = (a.mean_variance(v) + b.mean_variance(v)).sqrt();
        if se > 0.0 {
            diff[v].abs() / se <= tests.z_threshold
        } else {
            diff[v] == 0.0
        }
    })
}

/// Lowest-risk mechanism that still induces catalog entry `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMse {
    pub w: Vec<f64>,
    pub risk: f64,
    pub improvement: f64,
    pub qp: QpSolution,
}

/// Minimize `Var_{D_i}(w^T X - Y)` over `w` subject to
/// `w^T (shift_i - shift_j) >= 0` for every other entry `j`, so that the
/// agents' best response stays the intervention behind `D_i`. The risk's
/// second moments come from `D_i` itself. `w = 0` is always feasible.
pub fn min_mse_given_intervention(catalog: &InterventionCatalog, i: usize) -> Result<MinMse> {
    let n = catalog.n_features();
    let entry = catalog
        .entries
        .get(i)
        .ok_or_else(|| Error::InvalidModel(format!("catalog has no entry {i}")))?;
    let cov = entry.distribution.cov();
    let h = cov.view((0, 0), (n, n)).into_owned() * 2.0;
    let c = cov.view((0, n), (n, 1)).column(0).into_owned() * -2.0;
    let others: Vec<&CatalogEntry> = catalog
        .entries
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, e)| e)
        .collect();
    let g = DMatrix::from_fn(others.len(), n, |r, k| entry.shift[k] - others[r].shift[k]);
    let d = DVector::zeros(others.len());
    let qp = solve_qp(&h, &c, &g, &d, &DVector::zeros(n))?;
    let risk = distribution_risk(&entry.distribution, &qp.x);
    Ok(MinMse {
        w: qp.x.clone(),
        risk,
        improvement: entry.shift[n],
        qp,
    })
}

/// Front over the catalog: one minimum-risk point per entry, filtered.
pub fn linear_front(catalog: &InterventionCatalog) -> Result<(Front, Vec<MinMse>)> {
    let mut solved = Vec::with_capacity(catalog.entries.len());
    for i in 0..catalog.entries.len() {
        solved.push(min_mse_given_intervention(catalog, i)?);
    }
    let points = solved
        .iter()
        .map(|s| ParetoPoint {
            w: s.w.clone(),
            risk: s.risk,
            improvement: s.improvement,
        })
        .collect();
    Ok((pareto_filter(points), solved))
}
