use nalgebra::{DMatrix, DVector};

use super::equation::NodeEquation;
use super::linear::LinearScm;
use super::noise::NoiseSpec;
use crate::error::{Error, Result};
use crate::graph::{NodeId, OrientedGraph};

/// Additive-noise SCM `X_v = g_v(X_pa(v)) + U_v` with `g_v` from the
/// registered families.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveScm {
    n_features: usize,
    equations: Vec<NodeEquation>,
    noise: Vec<NoiseSpec>,
    graph: OrientedGraph,
    order: Vec<NodeId>,
}

impl AdditiveScm {
    pub fn new(n_features: usize, equations: Vec<NodeEquation>, noise: Vec<NoiseSpec>) -> Result<Self> {
        let m = n_features + 1;
        if equations.len() != m || noise.len() != m {
            return Err(Error::InvalidModel(format!(
                "expected {m} equations and noise specs, got {} and {}",
                equations.len(),
                noise.len()
            )));
        }
        for (v, eq) in equations.iter().enumerate() {
            eq.validate(NodeId(v), m)?;
        }
        for spec in &noise {
            spec.validate()?;
        }
        let edges = equations
            .iter()
            .enumerate()
            .flat_map(|(v, eq)| eq.parents.iter().map(move |&p| (p, NodeId(v))));
        let graph = OrientedGraph::from_dag(n_features, edges)?;
        let order = graph.topological_order()?;
        Ok(Self {
            n_features,
            equations,
            noise,
            graph,
            order,
        })
    }

    pub fn from_linear(scm: &LinearScm) -> Self {
        let m = scm.node_count();
        let a = scm.weights();
        let equations = (0..m)
            .map(|j| {
                let parents: Vec<NodeId> = (0..m).filter(|&k| a[(j, k)] != 0.0).map(NodeId).collect();
                let weights = parents.iter().map(|p| a[(j, p.0)]).collect();
                let mut eq = NodeEquation::linear(parents, weights);
                eq.intercept = scm.intercepts()[j];
                eq
            })
            .collect();
        Self {
            n_features: scm.n_features(),
            equations,
            noise: scm.noise().to_vec(),
            graph: scm.graph().clone(),
            order: scm.order().to_vec(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn equations(&self) -> &[NodeEquation] {
        &self.equations
    }

    pub fn noise(&self) -> &[NoiseSpec] {
        &self.noise
    }

    pub fn graph(&self) -> &OrientedGraph {
        &self.graph
    }

    pub fn order(&self) -> &[NodeId] {
        &self.order
    }

    pub fn max_degree(&self) -> usize {
        self.equations.iter().map(|e| e.function.degree()).max().unwrap_or(1)
    }

    /// Linear form, if every structural function is linear.
    pub fn to_linear(&self) -> Option<LinearScm> {
        let m = self.n_features + 1;
        let mut a = DMatrix::zeros(m, m);
        let mut c = DVector::zeros(m);
        for (j, eq) in self.equations.iter().enumerate() {
            let w = eq.function.linear_weights()?;
            for (p, wk) in eq.parents.iter().zip(w) {
                a[(j, p.0)] = wk;
            }
            c[j] = eq.intercept;
        }
        LinearScm::with_intercepts(self.n_features, a, c, self.noise.clone()).ok()
    }
}
