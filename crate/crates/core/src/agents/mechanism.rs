use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{node_name, NodeId};
use crate::observe::RegressionModel;

type ScoreFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Differentiable scoring function supplied by the caller. The gradient must
/// have one entry per node, with a zero outcome entry.
#[derive(Clone)]
pub struct CustomMechanism {
    pub name: String,
    pub score: Arc<ScoreFn>,
    pub gradient: Arc<GradFn>,
}

impl fmt::Debug for CustomMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomMechanism")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

/// Scoring rule `f(x; θ)` released by the principal.
#[derive(Debug, Clone)]
pub enum Mechanism {
    /// `f(x) = w^T x` with `w[Y] = 0`.
    LinearWeights(Vec<f64>),
    /// `f(x) = x_target - ĝ(x_P)`; `P` may contain the outcome node.
    NodeMinusModel {
        target: NodeId,
        model: RegressionModel,
    },
    Custom(CustomMechanism),
}

impl Mechanism {
    /// Linear weights over the `n` features; the outcome weight is appended.
    pub fn linear(features: &[f64]) -> Self {
        let mut w = features.to_vec();
        w.push(0.0);
        Mechanism::LinearWeights(w)
    }

    pub fn zero(n_features: usize) -> Self {
        Mechanism::LinearWeights(vec![0.0; n_features + 1])
    }

    /// `f = X_i`.
    pub fn unit(n_features: usize, i: NodeId) -> Self {
        let mut w = vec![0.0; n_features + 1];
        w[i.0] = 1.0;
        Mechanism::LinearWeights(w)
    }

    pub fn node_minus_model(target: NodeId, model: RegressionModel) -> Result<Self> {
        if model.regressors.contains(&target) {
            return Err(Error::InvalidMechanism(format!(
                "regressor set of {target} contains the target"
            )));
        }
        Ok(Mechanism::NodeMinusModel { target, model })
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        let y = n_features;
        match self {
            Mechanism::LinearWeights(w) => {
                if w.len() != n_features + 1 {
                    return Err(Error::InvalidMechanism(format!(
                        "{} weights for {} nodes",
                        w.len(),
                        n_features + 1
                    )));
                }
                if w[y] != 0.0 {
                    return Err(Error::InvalidMechanism("mechanisms cannot read the outcome".into()));
                }
                if w.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidMechanism("non-finite weight".into()));
                }
            }
            Mechanism::NodeMinusModel { target, model } => {
                // The regressors may include the outcome: isolation mechanisms
                // regress on every skeleton neighbour of the target.
                if target.0 >= y {
                    return Err(Error::InvalidMechanism("the target must be a feature".into()));
                }
                if model.regressors.iter().any(|p| p.0 > y) {
                    return Err(Error::InvalidMechanism("regressor outside the node set".into()));
                }
                if model.regressors.contains(target) {
                    return Err(Error::InvalidMechanism("regressor set contains the target".into()));
                }
            }
            Mechanism::Custom(_) => {}
        }
        Ok(())
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        match self {
            Mechanism::LinearWeights(w) => w.iter().zip(x).map(|(a, b)| a * b).sum(),
            Mechanism::NodeMinusModel { target, model } => x[target.0] - model.predict(x),
            Mechanism::Custom(c) => (c.score)(x),
        }
    }

    /// `df/dx` at `x`, one entry per node.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient_into(x, &mut g);
        g
    }

    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Mechanism::LinearWeights(w) => out.copy_from_slice(w),
            Mechanism::NodeMinusModel { target, model } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                out[target.0] = 1.0;
                for (k, p) in model.regressors.iter().enumerate() {
                    out[p.0] -= model.partial(k, x);
                }
            }
            Mechanism::Custom(c) => out.copy_from_slice(&(c.gradient)(x)),
        }
    }

    /// Weights of an equivalent linear score (up to a constant), if any.
    pub fn linear_weights(&self, n_features: usize) -> Option<Vec<f64>> {
        match self {
            Mechanism::LinearWeights(w) => Some(w.clone()),
            Mechanism::NodeMinusModel { target, model } if model.is_linear() => {
                let mut w = vec![0.0; n_features + 1];
                w[target.0] = 1.0;
                for (p, c) in model.regressors.iter().zip(model.linear_coefficients()) {
                    w[p.0] -= c;
                }
                Some(w)
            }
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Mechanism::LinearWeights(w) if w.iter().all(|&v| v == 0.0))
    }

    pub fn describe(&self, n_features: usize) -> MechanismRecord {
        match self {
            Mechanism::LinearWeights(w) => MechanismRecord::Linear { weights: w.clone() },
            Mechanism::NodeMinusModel { target, model } => MechanismRecord::NodeMinusModel {
                target: node_name(n_features, *target),
                regressors: model.regressors.iter().map(|&p| node_name(n_features, p)).collect(),
                coefficients: model.coefficients.clone(),
                intercept: model.intercept,
            },
            Mechanism::Custom(c) => MechanismRecord::Custom { name: c.name.clone() },
        }
    }
}

/// Serializable description of a deployed mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MechanismRecord {
    Linear {
        weights: Vec<f64>,
    },
    NodeMinusModel {
        target: String,
        regressors: Vec<String>,
        coefficients: Vec<Vec<f64>>,
        intercept: f64,
    },
    Custom {
        name: String,
    },
}
