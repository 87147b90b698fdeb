mod common;

use common::hildreth;
use csp_core::discovery::SimulatedEnvironment;
use csp_core::generate::{self, RandomDagOptions};
use csp_core::pareto::{
    dominates, explore_linear, identify_scm, linear_front, min_mse_given_intervention, objective_gradient,
    offline_front, pareto_filter, risk_improvement, solve_qp, ExploreOptions, FrontOptions, ParetoPoint,
};
use csp_core::{CostSpec, LinearScm, Mode, NodeId, NoiseSpec, RegressionFamily, StructuralModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pt(risk: f64, improvement: f64) -> ParetoPoint {
    ParetoPoint {
        w: vec![],
        risk,
        improvement,
    }
}

/// `x1 -> y -> x2` with `y = x1 + u_y`, `x2 = alpha2 y + u_2`; node order (x1, x2, y).
fn example1(alpha2: f64, v1: f64, v2: f64, vy: f64) -> LinearScm {
    let g = |v| NoiseSpec::Gaussian { mean: 0.0, variance: v };
    LinearScm::from_edges(
        2,
        &[(NodeId(0), NodeId(2), 1.0), (NodeId(2), NodeId(1), alpha2)],
        vec![g(v1), g(v2), g(vy)],
    )
    .unwrap()
}

/// Cost `a1^2 + a2^2`.
fn unit_cost() -> CostSpec {
    CostSpec::quadratic(&[2.0, 2.0])
}

#[test]
fn filter_examples() {
    let f = pareto_filter(vec![pt(1.0, 1.0), pt(2.0, 0.5)]);
    assert_eq!(f.points, vec![pt(1.0, 1.0)]);
    let f = pareto_filter(vec![pt(1.0, 1.0), pt(0.5, 0.2)]);
    assert_eq!(f.points, vec![pt(0.5, 0.2), pt(1.0, 1.0)]);
    let f = pareto_filter(vec![pt(1.0, 1.0), pt(1.0, 1.0), pt(1.0, 0.9)]);
    assert_eq!(f.points.len(), 2);
}

proptest! {
    #[test]
    fn filter_matches_pairwise_oracle(raw in prop::collection::vec((0u8..20, 0u8..20), 1..100)) {
        let points: Vec<ParetoPoint> = raw.iter().map(|&(r, i)| pt(r as f64, i as f64)).collect();
        let mut expected: Vec<ParetoPoint> = points
            .iter()
            .filter(|p| !points.iter().any(|q| dominates(q, p)))
            .cloned()
            .collect();
        expected.sort_by(|a, b| a.risk.total_cmp(&b.risk).then(b.improvement.total_cmp(&a.improvement)));
        let got = pareto_filter(points).points;
        prop_assert_eq!(got, expected);
    }
}

#[test]
fn identify_linear_chain_exact() {
    let g = |v| NoiseSpec::Gaussian { mean: 0.5, variance: v };
    let edges = [
        (NodeId(0), NodeId(1), 0.7),
        (NodeId(1), NodeId(2), -1.3),
        (NodeId(2), NodeId(3), 0.4),
    ];
    let truth = LinearScm::from_edges(3, &edges, vec![g(1.0), g(0.5), g(2.0), g(0.8)]).unwrap();
    let scm = StructuralModel::Linear(truth.clone());
    let mut env = SimulatedEnvironment::new(scm.clone(), CostSpec::quadratic(&[1.0; 3]), 1.0, Mode::Exact, 0).unwrap();
    let d0 = csp_core::discovery::Environment::natural(&mut env).unwrap();
    let got = identify_scm(scm.graph(), &d0, RegressionFamily::Linear).unwrap();
    let got = got.as_linear().unwrap();
    assert!((got.weights() - truth.weights()).amax() < 1e-8);
    assert!((got.noise_variance() - truth.noise_variance()).amax() < 1e-8);
    // Root: no structural weight, variance equals var(X1).
    assert!(got.weights().row(0).amax() == 0.0);
    assert!((got.noise_variance()[0] - d0.cov()[(0, 0)]).abs() < 1e-12);
    // Same natural mean.
    let (m, _) = got.exact_moments(&csp_core::Intervention::zeros(3));
    assert!((m - d0.mean()).amax() < 1e-8);
}

#[test]
fn identify_polynomial_empirical() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let edges = [(NodeId(0), NodeId(1)), (NodeId(1), NodeId(2))];
    let opts = RandomDagOptions {
        min_weight: 0.5,
        ..RandomDagOptions::default()
    };
    let truth = generate::random_additive_scm(2, &edges, 2, &opts, &mut rng).unwrap();
    let scm: StructuralModel = truth.clone().into();
    let mut env = SimulatedEnvironment::new(
        scm.clone(),
        CostSpec::quadratic(&[1.0; 2]),
        1.0,
        Mode::Empirical { count: 100_000 },
        1,
    )
    .unwrap();
    let d0 = csp_core::discovery::Environment::natural(&mut env).unwrap();
    let got = identify_scm(scm.graph(), &d0, RegressionFamily::Polynomial { degree: 2 }).unwrap();
    let StructuralModel::Additive(got) = got else {
        panic!("expected additive model")
    };
    for (a, b) in got.equations().iter().zip(truth.equations()) {
        let (
            csp_core::StructuralFn::Polynomial { coefficients: ca },
            csp_core::StructuralFn::Polynomial { coefficients: cb },
        ) = (&a.function, &b.function)
        else {
            assert!(b.parents.is_empty());
            continue;
        };
        for (x, y) in ca.iter().flatten().zip(cb.iter().flatten()) {
            assert!((x - y).abs() < 0.02, "{x} vs {y}");
        }
    }
}

/// Example 1 closed forms written out by hand.
fn example1_oracle(w: [f64; 2], alpha2: f64, v1: f64, v2: f64, vy: f64) -> (f64, f64) {
    let s = w[0] + alpha2 * w[1];
    let risk = (s - 1.0).powi(2) * v1 + (w[1] * alpha2 - 1.0).powi(2) * vy + w[1] * w[1] * v2;
    let improvement = s / (s * s + w[1] * w[1]).sqrt();
    (risk, improvement)
}

#[test]
fn risk_improvement_matches_example_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let alpha2 = rng.gen_range(0.05..5.0);
        let (v1, v2, vy) = (
            rng.gen_range(0.1..3.0),
            rng.gen_range(0.1..3.0),
            rng.gen_range(0.1..3.0),
        );
        let w = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let scm = example1(alpha2, v1, v2, vy);
        let got = risk_improvement(&w, &scm, &unit_cost(), 1.0).unwrap();
        let (risk, imp) = example1_oracle(w, alpha2, v1, v2, vy);
        assert!((got.risk - risk).abs() < 1e-9 * (1.0 + risk), "{} vs {risk}", got.risk);
        assert!((got.improvement - imp).abs() < 1e-12);
    }
}

#[test]
fn risk_improvement_examples() {
    let scm = example1(2.0, 1.0, 1.0, 1.0);
    let r = risk_improvement(&[1.0, 0.0], &scm, &unit_cost(), 1.0).unwrap();
    assert!((r.improvement - 1.0).abs() < 1e-12);
    let zero = risk_improvement(&[0.0, 0.0], &scm, &unit_cost(), 1.0).unwrap();
    assert_eq!(zero.improvement, 0.0);
    assert!((zero.risk - scm.covariance()[(2, 2)]).abs() < 1e-12);
    let eps: f64 = 0.01;
    let scm = example1(1.0 / eps, 1.0 / eps, eps.powi(4), 1.0 / eps);
    let r = risk_improvement(&[0.0, eps], &scm, &unit_cost(), 1.0).unwrap();
    assert!((r.risk - eps.powi(6)).abs() < 1e-15);
    assert!((r.improvement - 1.0 / (1.0 + eps * eps).sqrt()).abs() < 1e-12);
    assert!(r.improvement >= 1.0 - eps);
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..30 {
        let n = 2 + trial % 4;
        let edges = generate::random_dag(n, 0.5, &mut rng);
        let scm = generate::random_linear_scm(n, &edges, &RandomDagOptions::default(), &mut rng).unwrap();
        let cost = generate::random_quadratic_cost(n, (0.5, 2.0), &mut rng);
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let lambda = rng.gen_range(0.1..10.0);
        let got = objective_gradient(&w, &scm, &cost, 1.0, lambda).unwrap();
        for k in 0..n {
            let h = 1e-6;
            let mut wp = w.clone();
            wp[k] += h;
            let mut wm = w.clone();
            wm[k] -= h;
            let fp = objective_gradient(&wp, &scm, &cost, 1.0, lambda).unwrap().value;
            let fm = objective_gradient(&wm, &scm, &cost, 1.0, lambda).unwrap().value;
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (fd - got.gradient[k]).abs() < 1e-5 * (1.0 + fd.abs()),
                "trial {trial} k {k}: {fd} vs {}",
                got.gradient[k]
            );
        }
    }
}

#[test]
fn qp_matches_hildreth_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..100 {
        let n = 2 + trial % 5;
        let m = 1 + trial % 9;
        let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
        let c = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let g = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        let d = DVector::zeros(m);
        let sol = solve_qp(&h, &c, &g, &d, &DVector::zeros(n)).unwrap();
        let oracle = hildreth(&h, &c, &g, &d);
        let x = DVector::from_vec(sol.x.clone());
        assert!((&x - &oracle).amax() < 1e-6, "trial {trial}: {x} vs {oracle}");
        assert!(sol.kkt_residual <= 1e-6, "trial {trial}: kkt {}", sol.kkt_residual);
    }
}

#[test]
fn qp_without_constraints_is_least_squares() {
    let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let c = DVector::from_vec(vec![-1.0, 0.3]);
    let sol = solve_qp(&h, &c, &DMatrix::zeros(0, 2), &DVector::zeros(0), &DVector::zeros(2)).unwrap();
    let expected = h.clone().lu().solve(&(-c)).unwrap();
    assert!((DVector::from_vec(sol.x) - expected).amax() < 1e-12);
}

fn linear_env(scm: &LinearScm, prices: &[f64]) -> SimulatedEnvironment {
    SimulatedEnvironment::new(
        StructuralModel::Linear(scm.clone()),
        CostSpec::linear(prices),
        1.0,
        Mode::Exact,
        0,
    )
    .unwrap()
}

#[test]
fn explore_two_mutable_features() {
    let g = NoiseSpec::standard_normal;
    let scm = LinearScm::from_edges(
        2,
        &[(NodeId(0), NodeId(2), 1.0), (NodeId(1), NodeId(2), 0.5)],
        vec![g(), g(), g()],
    )
    .unwrap();
    let mut env = linear_env(&scm, &[1.0, 2.0]);
    let cat = explore_linear(&mut env, 2, &ExploreOptions::default()).unwrap();
    assert_eq!(cat.entries.len(), 4);
    assert!(cat.deployments <= 4);
    let mut shifts: Vec<(i64, i64)> = cat
        .entries
        .iter()
        .map(|e| ((e.shift[0] * 2.0).round() as i64, (e.shift[1] * 2.0).round() as i64))
        .collect();
    shifts.sort();
    assert_eq!(shifts, vec![(-2, 0), (0, -1), (0, 1), (2, 0)]);
}

#[test]
fn explore_one_mutable_feature() {
    let g = NoiseSpec::standard_normal;
    let scm = LinearScm::from_edges(
        2,
        &[(NodeId(0), NodeId(1), 1.0), (NodeId(1), NodeId(2), 0.5)],
        vec![g(), g(), g()],
    )
    .unwrap();
    let mut env = linear_env(&scm, &[f64::INFINITY, 2.0]);
    let cat = explore_linear(&mut env, 1, &ExploreOptions::default()).unwrap();
    assert_eq!(cat.entries.len(), 2);
    // x1 moves nothing, so the first pair is spent.
    assert_eq!(cat.deployments, 4);
    assert_eq!(cat.duplicates, 1);
}

#[test]
fn explore_duplicate_first_pair() {
    // x1 is immutable and isolated: both signs of e_1 fall to the tie-break.
    let g = NoiseSpec::standard_normal;
    let scm = LinearScm::from_edges(
        3,
        &[(NodeId(1), NodeId(2), 0.6), (NodeId(2), NodeId(3), 1.0)],
        vec![g(), g(), g(), g()],
    )
    .unwrap();
    let mut env = linear_env(&scm, &[f64::INFINITY, 1.0, 1.5]);
    let cat = explore_linear(&mut env, 2, &ExploreOptions::default()).unwrap();
    assert_eq!(cat.entries.len(), 4);
    assert_eq!(cat.duplicates, 1);
    assert!(cat.deployments <= 6);
    assert!((&cat.natural_mean - scm.exact_moments(&csp_core::Intervention::zeros(3)).0).amax() < 1e-12);
}

#[test]
fn explore_duplicate_probe_orthogonal_to_every_shift() {
    // Three features claimed mutable but x3 is not: once both real
    // interventions are seen, the last probe is orthogonal to every
    // achievable shift and only reproduces the tie-break distribution.
    let g = NoiseSpec::standard_normal;
    let scm = LinearScm::from_edges(
        3,
        &[(NodeId(0), NodeId(1), 1.0), (NodeId(1), NodeId(3), 1.0)],
        vec![g(), g(), g(), g()],
    )
    .unwrap();
    let mut env = linear_env(&scm, &[1.0, 1.0, f64::INFINITY]);
    let cat = explore_linear(&mut env, 3, &ExploreOptions::default()).unwrap();
    assert_eq!(cat.entries.len(), 4);
    assert_eq!(cat.duplicates, 1);
    assert_eq!(cat.w.len(), 3);
    assert_eq!(cat.deployments, 6);
}

#[test]
fn explore_random_instances_find_every_intervention() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..30 {
        let n = 2 + trial % 6;
        let edges = generate::random_dag(n, 0.5, &mut rng);
        let scm = generate::random_linear_scm(n, &edges, &RandomDagOptions::default(), &mut rng).unwrap();
        let k = rng.gen_range(1..=n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..n {
            let j = rng.gen_range(i..n);
            idx.swap(i, j);
        }
        let mutable: Vec<usize> = idx[..k].to_vec();
        let cost = generate::random_linear_cost(n, &mutable, (0.5, 2.0), &mut rng);
        let prices = cost.linear_prices().unwrap();
        let mut env = linear_env(&scm, &prices);
        let cat = explore_linear(&mut env, k, &ExploreOptions::default()).unwrap();
        assert!(cat.deployments <= 2 * n, "trial {trial}");
        assert_eq!(cat.entries.len(), 2 * k, "trial {trial}");
        // Every expected shift B (±b/p_i) e_i appears.
        for &i in &mutable {
            for sign in [1.0, -1.0] {
                let mut a = DVector::zeros(n + 1);
                a[i] = sign / prices[i];
                let shift = scm.total_effect() * a;
                assert!(
                    cat.entries.iter().any(|e| (&e.shift - &shift).amax() < 1e-9),
                    "trial {trial}: missing {i} {sign}"
                );
            }
        }
    }
}

#[test]
fn min_mse_active_constraint_is_tight() {
    // The least-squares weights favour x2 (a good predictor) but x2 is much
    // cheaper to move, so keeping the x1 intervention needs a constraint.
    let g = |v| NoiseSpec::Gaussian { mean: 0.0, variance: v };
    let scm = LinearScm::from_edges(
        2,
        &[(NodeId(0), NodeId(2), 1.0), (NodeId(2), NodeId(1), 1.0)],
        vec![g(1.0), g(0.01), g(1.0)],
    )
    .unwrap();
    let mut env = linear_env(&scm, &[1.0, 0.2]);
    let cat = explore_linear(&mut env, 2, &ExploreOptions::default()).unwrap();
    let i = cat.entries.iter().position(|e| e.shift[0] > 0.5).expect("x1 entry");
    let sol = min_mse_given_intervention(&cat, i).unwrap();
    assert!(sol.qp.kkt_residual <= 1e-6);
    assert!(!sol.qp.active.is_empty());
    let w = DVector::from_vec(sol.w.clone());
    let tight = cat.entries.iter().enumerate().filter(|(j, _)| *j != i).any(|(_, e)| {
        let gap = (cat.entries[i].shift.rows(0, 2) - e.shift.rows(0, 2)).dot(&w);
        gap.abs() < 1e-9
    });
    assert!(tight);
    let (front, _) = linear_front(&cat).unwrap();
    assert!(!front.points.is_empty());
}

#[test]
fn min_mse_matches_grid_on_two_features() {
    let g = |v| NoiseSpec::Gaussian { mean: 0.0, variance: v };
    let scm = LinearScm::from_edges(
        2,
        &[(NodeId(0), NodeId(2), 0.8), (NodeId(2), NodeId(1), 1.5)],
        vec![g(1.0), g(0.3), g(0.7)],
    )
    .unwrap();
    let prices = [1.0, 0.6];
    let mut env = linear_env(&scm, &prices);
    let cat = explore_linear(&mut env, 2, &ExploreOptions::default()).unwrap();
    let cov = scm.covariance();
    for i in 0..cat.entries.len() {
        let sol = min_mse_given_intervention(&cat, i).unwrap();
        let mut best = f64::INFINITY;
        let steps = 800;
        for a in 0..=steps {
            for b in 0..=steps {
                let w = [
                    -3.0 + 6.0 * a as f64 / steps as f64,
                    -3.0 + 6.0 * b as f64 / steps as f64,
                ];
                let feasible = cat.entries.iter().enumerate().filter(|(j, _)| *j != i).all(|(_, e)| {
                    (0..2)
                        .map(|k| w[k] * (cat.entries[i].shift[k] - e.shift[k]))
                        .sum::<f64>()
                        >= 0.0
                });
                if feasible {
                    let v = DVector::from_vec(vec![w[0], w[1], -1.0]);
                    best = best.min((&cov * &v).dot(&v));
                }
            }
        }
        // No feasible grid point beats the QP; the grid resolves it to ~1e-3.
        assert!(sol.risk <= best + 1e-9, "entry {i}: {} vs grid {best}", sol.risk);
        assert!(best - sol.risk < 5e-3, "entry {i}: {} vs grid {best}", sol.risk);
    }
}

#[test]
fn offline_front_endpoints() {
    let scm = example1(2.0, 1.0, 0.5, 1.0);
    let report = offline_front(&scm, &unit_cost(), 1.0, &FrontOptions::default()).unwrap();
    assert!(report.runs.iter().all(|r| r.converged));
    let first = &report.runs[0];
    // Least squares is the risk minimum; the small-lambda run sits next to it.
    let ls = report.front.points.first().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..2000 {
        let w = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let r = risk_improvement(&w, &scm, &unit_cost(), 1.0).unwrap();
        assert!(ls.risk <= r.risk + 1e-9);
        assert!(first.risk <= r.risk + 1e-3 * first.lambda);
    }
    let last = report.runs.last().unwrap();
    assert!(last.improvement > 1.0 - 1e-3, "{}", last.improvement);
    for pair in report.front.points.windows(2) {
        assert!(pair[0].risk < pair[1].risk && pair[0].improvement < pair[1].improvement);
    }
}

#[test]
fn offline_front_reaches_optimum_on_all_ancestor_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..10 {
        let n = 2 + trial % 4;
        let edges = generate::random_all_ancestor_dag(n, 0.5, &mut rng);
        let scm = generate::random_linear_scm(n, &edges, &RandomDagOptions::default(), &mut rng).unwrap();
        let cost = generate::random_quadratic_cost(n, (0.5, 2.0), &mut rng);
        let parents: Vec<f64> = (0..n).map(|k| scm.weights()[(n, k)]).collect();
        let best = risk_improvement(&parents, &scm, &cost, 1.0).unwrap();
        let opts = FrontOptions {
            lambdas: vec![1e3],
            ..FrontOptions::default()
        };
        let report = offline_front(&scm, &cost, 1.0, &opts).unwrap();
        let run = &report.runs[0];
        assert!(run.converged);
        assert!(
            run.improvement >= best.improvement * (1.0 - 1e-3),
            "trial {trial}: {} vs {}",
            run.improvement,
            best.improvement
        );
    }
}
