//! Agent cost families and best-response solvers.

mod closed_form;
mod cost;
mod mechanism;
mod numeric;

pub use closed_form::{best_response_isolation, best_response_linear_cost, best_response_quadratic, BestResponse};
pub use cost::{CostSpec, NodeCost};
pub use mechanism::{CustomMechanism, Mechanism, MechanismRecord};
pub use numeric::{best_response_numeric, NumericOptions};

pub(crate) use closed_form::{linear_response, quadratic_response};
pub(crate) use cost::CostCurve;
pub(crate) use numeric::{solve as numeric_solve, AgentProblem};

pub(crate) fn numeric_problem<'a>(
    f: &'a Mechanism,
    scm: &'a StructuralModel,
    cost: &CostSpec,
    b: f64,
    u: &'a [f64],
) -> AgentProblem<'a> {
    AgentProblem::new(f, scm, cost, b, u)
}

use crate::error::Result;
use crate::scm::StructuralModel;

/// Best response of one agent with realized noise `u`, using the closed
/// forms whenever the score is linear in the intervention (linear mechanism
/// on a linear SCM) and the per-agent cost is quadratic or linear.
pub fn best_response(
    f: &Mechanism,
    scm: &StructuralModel,
    cost: &CostSpec,
    b: f64,
    u: &[f64],
    opts: &NumericOptions,
) -> Result<BestResponse> {
    if let Some(br) = closed_form_response(f, scm, cost, b, u)? {
        return Ok(br);
    }
    best_response_numeric(f, scm, cost, b, u, opts)
}

/// Closed-form response when available. `u` is only read by heterogeneous costs.
pub(crate) fn closed_form_response(
    f: &Mechanism,
    scm: &StructuralModel,
    cost: &CostSpec,
    b: f64,
    u: &[f64],
) -> Result<Option<BestResponse>> {
    let n = scm.n_features();
    let (Some(lin), Some(w)) = (scm.as_linear(), f.linear_weights(n)) else {
        return Ok(None);
    };
    let curves = if cost.is_homogeneous() {
        cost.curves(&vec![0.0; n + 1])
    } else {
        cost.curves(&scm.propagate(u, &vec![0.0; n + 1]))
    };
    let g = lin.pullback(&nalgebra::DVector::from_column_slice(&w));
    let g = &g.as_slice()[..n];
    if let Some(c_diag) = curves
        .iter()
        .map(|c| match c {
            CostCurve::Immutable => Some(f64::INFINITY),
            CostCurve::Quadratic(q) => Some(2.0 * q),
            _ => None,
        })
        .collect::<Option<Vec<f64>>>()
    {
        return Ok(Some(closed_form::quadratic_response(g, &c_diag, b)));
    }
    if let Some(prices) = curves
        .iter()
        .map(|c| match c {
            CostCurve::Immutable => Some(f64::INFINITY),
            CostCurve::Linear(p) => Some(*p),
            _ => None,
        })
        .collect::<Option<Vec<f64>>>()
    {
        return Ok(Some(closed_form::linear_response(g, &prices, b)));
    }
    Ok(None)
}
