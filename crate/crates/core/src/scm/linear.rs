use nalgebra::{DMatrix, DVector};

use super::noise::NoiseSpec;
use super::Intervention;
use crate::error::{Error, Result};
use crate::graph::{NodeId, OrientedGraph};

/// Linear SCM `x = c + A x + u`, with `A[(j, k)]` the weight of edge `k -> j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScm {
    n_features: usize,
    weights: DMatrix<f64>,
    intercepts: DVector<f64>,
    noise: Vec<NoiseSpec>,
    total_effect: DMatrix<f64>,
    graph: OrientedGraph,
    order: Vec<NodeId>,
}

impl LinearScm {
    pub fn new(n_features: usize, weights: DMatrix<f64>, noise: Vec<NoiseSpec>) -> Result<Self> {
        let intercepts = DVector::zeros(n_features + 1);
        Self::with_intercepts(n_features, weights, intercepts, noise)
    }

    pub fn with_intercepts(
        n_features: usize,
        weights: DMatrix<f64>,
        intercepts: DVector<f64>,
        noise: Vec<NoiseSpec>,
    ) -> Result<Self> {
        let m = n_features + 1;
        if weights.shape() != (m, m) {
            return Err(Error::InvalidModel(format!(
                "edge weight matrix is {:?}, expected {m}x{m}",
                weights.shape()
            )));
        }
        if intercepts.len() != m || noise.len() != m {
            return Err(Error::InvalidModel(format!(
                "expected {m} intercepts and noise specs, got {} and {}",
                intercepts.len(),
                noise.len()
            )));
        }
        if weights.iter().chain(intercepts.iter()).any(|w| !w.is_finite()) {
            return Err(Error::InvalidModel("non-finite weight or intercept".into()));
        }
        for spec in &noise {
            spec.validate()?;
        }
        let mut edges = Vec::new();
        for j in 0..m {
            if weights[(j, j)] != 0.0 {
                return Err(Error::SelfEdge(NodeId(j)));
            }
            for k in 0..m {
                if weights[(j, k)] != 0.0 {
                    edges.push((NodeId(k), NodeId(j)));
                }
            }
        }
        let graph = OrientedGraph::from_dag(n_features, edges)?;
        let order = graph.topological_order()?;
        let total_effect = total_effect(&weights, &order)?;
        Ok(Self {
            n_features,
            weights,
            intercepts,
            noise,
            total_effect,
            graph,
            order,
        })
    }

    /// Build from `(from, to, weight)` triples.
    pub fn from_edges(n_features: usize, edges: &[(NodeId, NodeId, f64)], noise: Vec<NoiseSpec>) -> Result<Self> {
        let m = n_features + 1;
        let mut a = DMatrix::zeros(m, m);
        for &(from, to, w) in edges {
            if from.0 >= m {
                return Err(Error::UnknownNode(from));
            }
            if to.0 >= m {
                return Err(Error::UnknownNode(to));
            }
            a[(to.0, from.0)] = w;
        }
        Self::new(n_features, a, noise)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn node_count(&self) -> usize {
        self.n_features + 1
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn intercepts(&self) -> &DVector<f64> {
        &self.intercepts
    }

    pub fn noise(&self) -> &[NoiseSpec] {
        &self.noise
    }

    /// `B = (I - A)^{-1}`.
    pub fn total_effect(&self) -> &DMatrix<f64> {
        &self.total_effect
    }

    pub fn graph(&self) -> &OrientedGraph {
        &self.graph
    }

    pub fn order(&self) -> &[NodeId] {
        &self.order
    }

    pub fn noise_mean(&self) -> DVector<f64> {
        DVector::from_iterator(self.node_count(), self.noise.iter().map(NoiseSpec::mean))
    }

    pub fn noise_variance(&self) -> DVector<f64> {
        DVector::from_iterator(self.node_count(), self.noise.iter().map(NoiseSpec::variance))
    }

    /// Mean `B (c + mu_u + a)` and covariance `B diag(var_u) B^T`.
    pub fn exact_moments(&self, intervention: &Intervention) -> (DVector<f64>, DMatrix<f64>) {
        let b = &self.total_effect;
        let shift = &self.intercepts + self.noise_mean() + intervention.to_dvector();
        let mean = b * shift;
        (mean, self.covariance())
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let b = &self.total_effect;
        let d = DMatrix::from_diagonal(&self.noise_variance());
        let cov = b * d * b.transpose();
        (&cov + cov.transpose()) * 0.5
    }

    /// `B^T w`: gradient of a linear score with respect to the intervention.
    pub fn pullback(&self, w: &DVector<f64>) -> DVector<f64> {
        self.total_effect.tr_mul(w)
    }
}

// Solve (I - A) B = I by substitution along the topological order, then
// verify the residual.
fn total_effect(a: &DMatrix<f64>, order: &[NodeId]) -> Result<DMatrix<f64>> {
    let m = a.nrows();
    let mut b = DMatrix::<f64>::zeros(m, m);
    for col in 0..m {
        for &v in order {
            let j = v.0;
            let mut s = if j == col { 1.0 } else { 0.0 };
            for k in 0..m {
                let w = a[(j, k)];
                if w != 0.0 {
                    s += w * b[(k, col)];
                }
            }
            b[(j, col)] = s;
        }
    }
    let residual = (&b * (DMatrix::identity(m, m) - a)) - DMatrix::<f64>::identity(m, m);
    let scale = b.amax().max(1.0) * a.amax().max(1.0);
    if residual.amax() > 1e-10 * scale {
        return Err(Error::Singular(format!(
            "total-effect residual {:.3e} exceeds tolerance",
            residual.amax()
        )));
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1(alpha2: f64, var: [f64; 3]) -> LinearScm {
        // x1 -> y -> x2, node order (x1, x2, y)
        let noise = var
            .iter()
            .map(|&v| NoiseSpec::Gaussian { mean: 0.0, variance: v })
            .collect();
        LinearScm::from_edges(2, &[(NodeId(0), NodeId(2), 1.0), (NodeId(2), NodeId(1), alpha2)], noise).unwrap()
    }

    #[test]
    fn total_effect_inverts_i_minus_a() {
        let scm = example1(2.0, [1.0, 1.0, 1.0]);
        let b = scm.total_effect();
        let eye = DMatrix::<f64>::identity(3, 3);
        let prod = b * (&eye - scm.weights());
        assert!((prod - eye).amax() < 1e-12);
        for i in 0..3 {
            assert_eq!(b[(i, i)], 1.0);
        }
        // x2 receives alpha2 from y and alpha2 from x1 through y
        assert_eq!(b[(1, 0)], 2.0);
    }

    #[test]
    fn example1_covariance_of_x2() {
        let (v1, v2, vy, alpha2) = (0.7, 0.3, 1.9, 1.5);
        let scm = example1(alpha2, [v1, v2, vy]);
        let (mean, cov) = scm.exact_moments(&Intervention::zeros(2));
        assert!(mean.amax() == 0.0);
        let expected = v1 * alpha2 * alpha2 + vy * alpha2 * alpha2 + v2;
        assert!((cov[(1, 1)] - expected).abs() < 1e-12);
    }

    #[test]
    fn unit_shift_gives_first_column_of_b() {
        let noise = vec![NoiseSpec::standard_normal(); 4];
        let scm = LinearScm::from_edges(
            3,
            &[
                (NodeId(0), NodeId(1), 1.0),
                (NodeId(1), NodeId(2), 1.0),
                (NodeId(2), NodeId(3), 1.0),
            ],
            noise,
        )
        .unwrap();
        let a = Intervention::from_features(&[1.0, 0.0, 0.0]);
        let (mean, _) = scm.exact_moments(&a);
        assert_eq!(mean, scm.total_effect().column(0).into_owned());
    }

    #[test]
    fn cyclic_weights_rejected() {
        let noise = vec![NoiseSpec::standard_normal(); 3];
        let r = LinearScm::from_edges(2, &[(NodeId(0), NodeId(1), 1.0), (NodeId(1), NodeId(0), 1.0)], noise);
        assert!(matches!(r, Err(Error::Cycle(_))));
    }
}
