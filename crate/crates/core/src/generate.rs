//! Random instance generators for tests, benchmarks and experiments.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{CostSpec, NodeCost};
use crate::error::Result;
use crate::graph::NodeId;
use crate::scm::{AdditiveScm, LinearScm, NodeEquation, NoiseSpec};

/// Parameters for random DAG and SCM generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomDagOptions {
    pub edge_probability: f64,
    /// Edge weights are drawn with magnitude in `[min_weight, max_weight]` and a random sign.
    pub min_weight: f64,
    pub max_weight: f64,
    /// Noise variances are drawn uniformly from this range.
    pub variance_range: (f64, f64),
}

impl Default for RandomDagOptions {
    fn default() -> Self {
        Self {
            edge_probability: 0.5,
            min_weight: 0.1,
            max_weight: 1.0,
            variance_range: (0.5, 2.0),
        }
    }
}

/// Random DAG over `n_features + 1` nodes: a random topological order with
/// each forward pair joined independently.
pub fn random_dag<R: Rng + ?Sized>(n_features: usize, p: f64, rng: &mut R) -> Vec<(NodeId, NodeId)> {
    let mut order: Vec<usize> = (0..=n_features).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 0..order.len() {
        for j in i + 1..order.len() {
            if rng.gen_bool(p) {
                edges.push((NodeId(order[i]), NodeId(order[j])));
            }
        }
    }
    edges
}

/// Random DAG in which every feature is an ancestor of `Y`: `Y` is last in
/// the order and any feature without a path to `Y` gets a direct edge.
pub fn random_all_ancestor_dag<R: Rng + ?Sized>(n_features: usize, p: f64, rng: &mut R) -> Vec<(NodeId, NodeId)> {
    let mut order: Vec<usize> = (0..n_features).collect();
    order.shuffle(rng);
    let y = n_features;
    let mut edges = Vec::new();
    for i in 0..n_features {
        for j in i + 1..n_features {
            if rng.gen_bool(p) {
                edges.push((NodeId(order[i]), NodeId(order[j])));
            }
        }
        if rng.gen_bool(p) {
            edges.push((NodeId(order[i]), NodeId(y)));
        }
    }
    // Walk the order backwards so reaches_y is final for later nodes.
    let mut reaches_y = vec![false; n_features + 1];
    reaches_y[y] = true;
    for &v in order.iter().rev() {
        let hit = edges.iter().any(|&(a, b)| a.0 == v && reaches_y[b.0]);
        if !hit {
            edges.push((NodeId(v), NodeId(y)));
        }
        reaches_y[v] = true;
    }
    edges
}

/// Chain `X1 -> X2 -> ... -> Xn -> Y`.
pub fn chain_dag(n_features: usize) -> Vec<(NodeId, NodeId)> {
    (0..n_features).map(|i| (NodeId(i), NodeId(i + 1))).collect()
}

fn weight<R: Rng + ?Sized>(opts: &RandomDagOptions, rng: &mut R) -> f64 {
    let m = rng.gen_range(opts.min_weight..=opts.max_weight);
    if rng.gen_bool(0.5) {
        m
    } else {
        -m
    }
}

fn gaussian_noise<R: Rng + ?Sized>(count: usize, range: (f64, f64), rng: &mut R) -> Vec<NoiseSpec> {
    (0..count)
        .map(|_| NoiseSpec::Gaussian {
            mean: 0.0,
            variance: if range.0 < range.1 {
                rng.gen_range(range.0..=range.1)
            } else {
                range.0
            },
        })
        .collect()
}

/// Linear-Gaussian SCM on the given DAG with random weights and variances.
pub fn random_linear_scm<R: Rng + ?Sized>(
    n_features: usize,
    edges: &[(NodeId, NodeId)],
    opts: &RandomDagOptions,
    rng: &mut R,
) -> Result<LinearScm> {
    let weighted: Vec<_> = edges.iter().map(|&(a, b)| (a, b, weight(opts, rng))).collect();
    let noise = gaussian_noise(n_features + 1, opts.variance_range, rng);
    LinearScm::from_edges(n_features, &weighted, noise)
}

/// Additive SCM on the given DAG. With `degree > 1` every parent enters
/// through a polynomial whose linear coefficient has magnitude at least
/// `min_weight`; higher coefficients are drawn from `[-0.3, 0.3]`.
pub fn random_additive_scm<R: Rng + ?Sized>(
    n_features: usize,
    edges: &[(NodeId, NodeId)],
    degree: usize,
    opts: &RandomDagOptions,
    rng: &mut R,
) -> Result<AdditiveScm> {
    let m = n_features + 1;
    let mut equations = Vec::with_capacity(m);
    for v in 0..m {
        let mut parents: Vec<NodeId> = edges.iter().filter(|&&(_, b)| b.0 == v).map(|&(a, _)| a).collect();
        parents.sort();
        parents.dedup();
        if parents.is_empty() {
            equations.push(NodeEquation::root());
        } else if degree <= 1 {
            let w = parents.iter().map(|_| weight(opts, rng)).collect();
            equations.push(NodeEquation::linear(parents, w));
        } else {
            let coefs = parents
                .iter()
                .map(|_| {
                    let mut c = vec![weight(opts, rng)];
                    c.extend((1..degree).map(|_| rng.gen_range(-0.3..=0.3)));
                    c
                })
                .collect();
            equations.push(NodeEquation::polynomial(parents, coefs));
        }
    }
    let noise = gaussian_noise(m, opts.variance_range, rng);
    AdditiveScm::new(n_features, equations, noise)
}

/// Diagonal quadratic cost with coefficients uniform on `range`.
pub fn random_quadratic_cost<R: Rng + ?Sized>(n_features: usize, range: (f64, f64), rng: &mut R) -> CostSpec {
    let c: Vec<f64> = (0..n_features).map(|_| rng.gen_range(range.0..=range.1)).collect();
    CostSpec::quadratic(&c)
}

/// Linear cost with prices uniform on `range`; features outside `mutable` are immutable.
pub fn random_linear_cost<R: Rng + ?Sized>(
    n_features: usize,
    mutable: &[usize],
    range: (f64, f64),
    rng: &mut R,
) -> CostSpec {
    let prices: Vec<f64> = (0..n_features)
        .map(|i| {
            let p = rng.gen_range(range.0..=range.1);
            if mutable.contains(&i) {
                p
            } else {
                f64::INFINITY
            }
        })
        .collect();
    CostSpec::linear(&prices)
}

/// Separable class-2 cost `p |a| + q a^2` per node.
pub fn random_mixed_cost<R: Rng + ?Sized>(n_features: usize, rng: &mut R) -> CostSpec {
    let nodes = (0..n_features)
        .map(|_| NodeCost::polynomial(vec![rng.gen_range(0.5..=2.0), rng.gen_range(0.5..=2.0)]))
        .collect();
    CostSpec::Class2Separable(nodes)
}
