use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;

/// Structural function families. Polynomials are separable in the parents:
/// `sum_p sum_k coefficients[p][k] * x_p^(k+1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum StructuralFn {
    Linear { weights: Vec<f64> },
    Polynomial { coefficients: Vec<Vec<f64>> },
}

impl StructuralFn {
    pub fn arity(&self) -> usize {
        match self {
            StructuralFn::Linear { weights } => weights.len(),
            StructuralFn::Polynomial { coefficients } => coefficients.len(),
        }
    }

    pub fn degree(&self) -> usize {
        match self {
            StructuralFn::Linear { .. } => 1,
            StructuralFn::Polynomial { coefficients } => coefficients.iter().map(Vec::len).max().unwrap_or(1).max(1),
        }
    }

    /// Linear in every parent (a polynomial whose higher coefficients are all zero counts).
    pub fn is_linear(&self) -> bool {
        match self {
            StructuralFn::Linear { .. } => true,
            StructuralFn::Polynomial { coefficients } => {
                coefficients.iter().all(|c| c.iter().skip(1).all(|&v| v == 0.0))
            }
        }
    }

    pub fn linear_weights(&self) -> Option<Vec<f64>> {
        if !self.is_linear() {
            return None;
        }
        Some(match self {
            StructuralFn::Linear { weights } => weights.clone(),
            StructuralFn::Polynomial { coefficients } => {
                coefficients.iter().map(|c| c.first().copied().unwrap_or(0.0)).collect()
            }
        })
    }

    fn term(&self, k: usize, v: f64) -> f64 {
        match self {
            StructuralFn::Linear { weights } => weights[k] * v,
            StructuralFn::Polynomial { coefficients } => horner(&coefficients[k], v) * v,
        }
    }

    fn term_derivative(&self, k: usize, v: f64) -> f64 {
        match self {
            StructuralFn::Linear { weights } => weights[k],
            StructuralFn::Polynomial { coefficients } => {
                let c = &coefficients[k];
                let mut acc = 0.0;
                for (j, &cj) in c.iter().enumerate().rev() {
                    acc = acc * v + (j + 1) as f64 * cj;
                }
                acc
            }
        }
    }
}

// c[0] + c[1] v + c[2] v^2 + ...
fn horner(c: &[f64], v: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &cj| acc * v + cj)
}

/// `X_v = intercept + g(X_parents) + U_v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEquation {
    pub parents: Vec<NodeId>,
    #[serde(default)]
    pub intercept: f64,
    pub function: StructuralFn,
}

impl NodeEquation {
    pub fn root() -> Self {
        Self {
            parents: Vec::new(),
            intercept: 0.0,
            function: StructuralFn::Linear { weights: Vec::new() },
        }
    }

    pub fn linear(parents: Vec<NodeId>, weights: Vec<f64>) -> Self {
        Self {
            parents,
            intercept: 0.0,
            function: StructuralFn::Linear { weights },
        }
    }

    pub fn polynomial(parents: Vec<NodeId>, coefficients: Vec<Vec<f64>>) -> Self {
        Self {
            parents,
            intercept: 0.0,
            function: StructuralFn::Polynomial { coefficients },
        }
    }

    pub fn validate(&self, node: NodeId, node_count: usize) -> Result<()> {
        if self.function.arity() != self.parents.len() {
            return Err(Error::InvalidModel(format!(
                "node {node}: {} parents but {} function terms",
                self.parents.len(),
                self.function.arity()
            )));
        }
        if !self.intercept.is_finite() {
            return Err(Error::InvalidModel(format!("node {node}: non-finite intercept")));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &p in &self.parents {
            if p.0 >= node_count {
                return Err(Error::UnknownNode(p));
            }
            if p == node {
                return Err(Error::SelfEdge(p));
            }
            if !seen.insert(p) {
                return Err(Error::InvalidModel(format!("node {node}: duplicate parent {p}")));
            }
        }
        let finite = match &self.function {
            StructuralFn::Linear { weights } => weights.iter().all(|w| w.is_finite()),
            StructuralFn::Polynomial { coefficients } => coefficients.iter().flatten().all(|w| w.is_finite()),
        };
        if !finite {
            return Err(Error::InvalidModel(format!("node {node}: non-finite coefficient")));
        }
        Ok(())
    }

    /// `intercept + g(parents)` reading parent values from a full node vector.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.parents
            .iter()
            .enumerate()
            .fold(self.intercept, |acc, (k, p)| acc + self.function.term(k, x[p.0]))
    }

    /// Partial derivative with respect to the `k`-th parent.
    pub fn partial(&self, k: usize, x: &[f64]) -> f64 {
        self.function.term_derivative(k, x[self.parents[k].0])
    }
}
