//! Invariants of structural models and agent best responses on random instances.

use csp_core::agents::{best_response_linear_cost, best_response_numeric, best_response_quadratic, NumericOptions};
use csp_core::generate::{self, RandomDagOptions};
use csp_core::{CostSpec, Intervention, LinearScm, Mechanism, NodeId, StructuralModel};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_linear(n: usize, seed: u64) -> LinearScm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = generate::random_dag(n, 0.5, &mut rng);
    generate::random_linear_scm(n, &edges, &RandomDagOptions::default(), &mut rng).unwrap()
}

fn random_polynomial(n: usize, seed: u64) -> StructuralModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = generate::random_dag(n, 0.5, &mut rng);
    let opts = RandomDagOptions {
        min_weight: 0.5,
        ..RandomDagOptions::default()
    };
    generate::random_additive_scm(n, &edges, 2, &opts, &mut rng)
        .unwrap()
        .into()
}

/// `reach[(j, k)]`: a directed path runs from `k` to `j`, or `j == k`.
fn reachability(scm: &StructuralModel) -> DMatrix<bool> {
    let m = scm.node_count();
    let mut adj = DMatrix::<f64>::identity(m, m);
    for (from, to) in scm.graph().directed_edges() {
        adj[(to.0, from.0)] = 1.0;
    }
    let mut reach = adj.clone();
    for _ in 0..m {
        reach = &reach * &adj;
        reach.apply(|v| *v = v.min(1.0));
    }
    reach.map(|v| v > 0.0)
}

fn features(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

fn prices(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.2f64..5.0, n)
}

fn with_outcome(w: &[f64]) -> Vec<f64> {
    let mut out = w.to_vec();
    out.push(0.0);
    out
}

#[test]
fn sample_mean_converges_to_exact_mean() {
    let lin = random_linear(5, 31);
    let a = Intervention::from_features(&[0.5, -1.0, 0.0, 2.0, 0.3]);
    let (mean, cov) = lin.exact_moments(&a);
    let count = 100_000;
    let samples = StructuralModel::from(lin).sample(count, &a, 9).unwrap();
    let max_std = cov.diagonal().iter().fold(0.0f64, |m, &v| m.max(v.sqrt()));
    for (j, col) in samples.column_iter().enumerate() {
        let emp = col.sum() / count as f64;
        assert!(
            (emp - mean[j]).abs() < 4.0 / (count as f64).sqrt() * max_std,
            "node {j}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn total_effect_inverts(seed in 0u64..10_000, n in 1usize..7) {
        let lin = random_linear(n, seed);
        let m = n + 1;
        let eye = DMatrix::<f64>::identity(m, m);
        let b = lin.total_effect();
        prop_assert!((b * (&eye - lin.weights()) - &eye).amax() < 1e-10);
        for i in 0..m {
            prop_assert_eq!(b[(i, i)], 1.0);
        }
    }

    #[test]
    fn interventions_compose_additively(seed in 0u64..10_000, a in features(4), a2 in features(4)) {
        let scm = StructuralModel::from(random_linear(4, seed));
        let sum: Vec<f64> = a.iter().zip(&a2).map(|(x, y)| x + y).collect();
        let draw = |v: &[f64]| scm.sample(50, &Intervention::from_features(v), seed).unwrap();
        let base = draw(&[0.0; 4]);
        let lhs = draw(&sum) - &base;
        let rhs = (draw(&a) - &base) + (draw(&a2) - &base);
        prop_assert!((lhs - rhs).amax() < 1e-9);
    }

    #[test]
    fn intervention_moves_only_descendants(seed in 0u64..10_000, i in 0usize..4, t in -3.0f64..3.0) {
        let scm = random_polynomial(4, seed);
        let reach = reachability(&scm);
        let mut a = vec![0.0; 4];
        a[i] = t;
        let base = scm.sample(50, &Intervention::zeros(4), seed).unwrap();
        let moved = scm.sample(50, &Intervention::from_features(&a), seed).unwrap();
        for j in 0..5 {
            if !reach[(j, i)] {
                prop_assert_eq!(base.column(j), moved.column(j), "node {} is not downstream of {}", j, i);
            }
        }
    }

    #[test]
    fn quadratic_response_saturates_budget(seed in 0u64..10_000, w in features(4), c in prices(4), b in 0.1f64..5.0) {
        prop_assume!(w.iter().any(|v| v.abs() > 1e-3));
        let lin = random_linear(4, seed);
        let w = with_outcome(&w);
        let br = best_response_quadratic(&w, &lin, &c, b).unwrap();
        let cost = CostSpec::quadratic(&c).value(br.a_star.features(), &[0.0; 5]);
        prop_assert!(cost <= b + 1e-8);
        prop_assert!(br.achieved_score >= 0.0);
        if !br.degenerate {
            prop_assert!((cost - b).abs() < 1e-8);
        }
        let neg: Vec<f64> = w.iter().map(|v| -v).collect();
        let flipped = best_response_quadratic(&neg, &lin, &c, b).unwrap();
        for (p, q) in br.a_star.as_slice().iter().zip(flipped.a_star.as_slice()) {
            prop_assert!((p + q).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_cost_response_is_feasible_and_sparse(seed in 0u64..10_000, w in features(4), c in prices(4), b in 0.1f64..5.0) {
        let lin = random_linear(4, seed);
        let br = best_response_linear_cost(&with_outcome(&w), &lin, &c, b).unwrap();
        let cost = CostSpec::linear(&c).value(br.a_star.features(), &[0.0; 5]);
        prop_assert!((cost - b).abs() < 1e-9);
        prop_assert_eq!(br.a_star.features().iter().filter(|&&v| v != 0.0).count(), 1);
        prop_assert!(br.achieved_score >= 0.0);
    }

    #[test]
    fn unit_mechanism_targets_ancestors_of_the_node(seed in 0u64..10_000, i in 0usize..4, c in prices(4)) {
        let lin = random_linear(4, seed);
        let reach = reachability(&StructuralModel::from(lin.clone()));
        let mut w = vec![0.0; 5];
        w[i] = 1.0;
        let br = best_response_quadratic(&w, &lin, &c, 1.0).unwrap();
        let a = br.a_star.features();
        prop_assert!(a[i].abs() > 1e-6);
        for k in 0..4 {
            if !reach[(i, k)] {
                prop_assert_eq!(a[k], 0.0);
            }
        }
    }

    #[test]
    fn responses_never_lower_the_score(seed in 0u64..10_000, w in features(4), c in prices(4)) {
        let lin = random_linear(4, seed);
        let scm = StructuralModel::from(lin.clone());
        let w = with_outcome(&w);
        let u = vec![0.3, -0.2, 1.0, 0.0, -0.5];
        let br = best_response_quadratic(&w, &lin, &c, 1.0).unwrap();
        let f = Mechanism::LinearWeights(w);
        let before = f.score(&scm.propagate(&u, &[0.0; 5]));
        let after = f.score(&scm.propagate(&u, br.a_star.as_slice()));
        prop_assert!(after >= before - 1e-12);
        prop_assert!((after - before - br.achieved_score).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn numeric_matches_quadratic_closed_form(seed in 0u64..10_000, w in features(3), c in prices(3)) {
        prop_assume!(w.iter().any(|v| v.abs() > 0.05));
        let lin = random_linear(3, seed);
        let w = with_outcome(&w);
        let exact = best_response_quadratic(&w, &lin, &c, 1.0).unwrap();
        let scm = StructuralModel::from(lin);
        let num = best_response_numeric(
            &Mechanism::LinearWeights(w),
            &scm,
            &CostSpec::quadratic(&c),
            1.0,
            &[0.0; 4],
            &NumericOptions::default(),
        )
        .unwrap();
        prop_assert!((num.achieved_score - exact.achieved_score).abs() < 1e-6 * exact.achieved_score.max(1.0));
        for (p, q) in num.a_star.as_slice().iter().zip(exact.a_star.as_slice()) {
            prop_assert!((p - q).abs() < 1e-5, "{:?} vs {:?}", num.a_star, exact.a_star);
        }
    }

    #[test]
    fn numeric_response_on_polynomial_model_is_feasible(seed in 0u64..10_000, i in 0usize..3, c in prices(3), b in 0.1f64..3.0) {
        let scm = random_polynomial(3, seed);
        let cost = CostSpec::quadratic(&c);
        let u = vec![0.2, -0.4, 0.1, 0.0];
        let f = Mechanism::unit(3, NodeId(i));
        let br = best_response_numeric(&f, &scm, &cost, b, &u, &NumericOptions::default()).unwrap();
        prop_assert!(cost.value(br.a_star.features(), &[0.0; 4]) <= b + 1e-8);
        prop_assert!(br.achieved_score >= 0.0);
        prop_assert_eq!(br.a_star.as_slice()[3], 0.0);
    }
}
