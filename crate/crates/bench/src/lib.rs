//! Seeded instances shared by the criterion benchmarks.

use csp_core::generate::{random_additive_scm, random_dag, random_quadratic_cost, RandomDagOptions};
use csp_core::{CostSpec, LinearScm, StructuralModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random linear-Gaussian instance with a diagonal quadratic cost.
pub fn linear_instance(n: usize, seed: u64) -> (LinearScm, CostSpec) {
    let mut r = rng(seed);
    let opts = RandomDagOptions::default();
    let edges = random_dag(n, opts.edge_probability, &mut r);
    let scm = csp_core::generate::random_linear_scm(n, &edges, &opts, &mut r).expect("valid dag");
    let cost = random_quadratic_cost(n, (0.5, 2.0), &mut r);
    (scm, cost)
}

/// Random additive instance with degree-2 polynomial edges.
pub fn polynomial_instance(n: usize, seed: u64) -> (StructuralModel, CostSpec) {
    let mut r = rng(seed);
    let opts = RandomDagOptions {
        min_weight: 0.5,
        ..RandomDagOptions::default()
    };
    let edges = random_dag(n, opts.edge_probability, &mut r);
    let scm = random_additive_scm(n, &edges, 2, &opts, &mut r).expect("valid dag");
    let cost = random_quadratic_cost(n, (0.5, 2.0), &mut r);
    (scm.into(), cost)
}
