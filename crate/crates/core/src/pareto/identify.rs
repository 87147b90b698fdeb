use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::OrientedGraph;
use crate::observe::{fit_conditional, InducedDistribution, RegressionFamily};
use crate::scm::{AdditiveScm, LinearScm, NodeEquation, NoiseSpec, StructuralModel};

/// Fit every node on its parents in `d0`.
///
/// Fitted intercepts become structural intercepts and the exogenous terms
/// are zero-mean Gaussians with the residual variances, so the identified
/// model reproduces the natural mean. A linear family yields a
/// [`LinearScm`], a polynomial one an additive model.
pub fn identify_scm(
    graph: &OrientedGraph,
    d0: &InducedDistribution,
    family: RegressionFamily,
) -> Result<StructuralModel> {
    if !graph.is_fully_oriented() {
        return Err(Error::InvalidModel(
            "identification needs a fully oriented graph".into(),
        ));
    }
    let n = graph.n_features();
    let m = n + 1;
    let mut fits = Vec::with_capacity(m);
    for v in graph.skeleton().nodes() {
        fits.push(fit_conditional(d0, v, &graph.parents(v), family)?);
    }
    let noise: Vec<NoiseSpec> = fits
        .iter()
        .map(|f| NoiseSpec::Gaussian {
            mean: 0.0,
            variance: f.residual_variance.max(0.0),
        })
        .collect();
    match family {
        RegressionFamily::Linear => {
            let mut a = DMatrix::zeros(m, m);
            let mut c = DVector::zeros(m);
            for (v, fit) in fits.iter().enumerate() {
                c[v] = fit.intercept;
                for (p, coef) in fit.regressors.iter().zip(&fit.coefficients) {
                    a[(v, p.0)] = coef[0];
                }
            }
            Ok(StructuralModel::Linear(LinearScm::with_intercepts(n, a, c, noise)?))
        }
        RegressionFamily::Polynomial { .. } => {
            let equations = fits
                .into_iter()
                .map(|fit| {
                    let mut eq = if fit.regressors.is_empty() {
                        NodeEquation::root()
                    } else {
                        NodeEquation::polynomial(fit.regressors, fit.coefficients)
                    };
                    eq.intercept = fit.intercept;
                    eq
                })
                .collect();
            Ok(StructuralModel::Additive(AdditiveScm::new(n, equations, noise)?))
        }
    }
}
