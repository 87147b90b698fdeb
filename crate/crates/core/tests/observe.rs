use csp_core::agents::{best_response, NumericOptions};
use csp_core::generate::{self, RandomDagOptions};
use csp_core::observe::{
    conditional_shift_test, faithfulness_diagnostic, fit_conditional, induce, mean_shift_test, InduceOptions,
    TestOptions,
};
use csp_core::{
    AdditiveScm, CostSpec, InducedDistribution, Intervention, LinearScm, Mechanism, Mode, NodeEquation, NodeId,
    NoiseSpec, RegressionFamily, StructuralModel,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EXACT: InduceOptions = InduceOptions {
    mode: Mode::Exact,
    seed: 0,
    numeric: NumericOptions {
        starts: 8,
        tolerance: 1e-6,
        max_iterations: 10_000,
        seed: 0x5eed,
    },
};

fn gauss(v: f64) -> NoiseSpec {
    NoiseSpec::Gaussian { mean: 0.0, variance: v }
}

/// `x1 -> y -> x2`, unit weight into `y`; node order (x1, x2, y).
fn example1(alpha2: f64) -> StructuralModel {
    LinearScm::from_edges(
        2,
        &[(NodeId(0), NodeId(2), 1.0), (NodeId(2), NodeId(1), alpha2)],
        vec![gauss(1.0); 3],
    )
    .unwrap()
    .into()
}

fn random_linear(n: usize, seed: u64) -> LinearScm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = generate::random_dag(n, 0.5, &mut rng);
    generate::random_linear_scm(n, &edges, &RandomDagOptions::default(), &mut rng).unwrap()
}

fn natural(scm: &StructuralModel) -> InducedDistribution {
    induce(
        scm,
        &Mechanism::zero(scm.n_features()),
        &CostSpec::quadratic(&vec![1.0; scm.n_features()]),
        1.0,
        &EXACT,
    )
    .unwrap()
}

fn sub_cov(cov: &DMatrix<f64>, rows: &[NodeId], cols: &[NodeId]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| cov[(rows[i].0, cols[j].0)])
}

/// `Δ_V - Δ_M^T Σ_MM^{-1} σ_MV` with a plain matrix inverse.
fn intercept_shift(d: &InducedDistribution, d_0: &InducedDistribution, v: NodeId, m: &[NodeId]) -> f64 {
    let cov = d_0.cov();
    let beta = sub_cov(cov, m, m).try_inverse().unwrap() * sub_cov(cov, m, &[v]);
    let delta = d.mean() - d_0.mean();
    let delta_m = DVector::from_iterator(m.len(), m.iter().map(|p| delta[p.0]));
    delta[v.0] - delta_m.dot(&beta.column(0))
}

#[test]
fn zero_mechanism_induces_the_natural_distribution() {
    let scm: StructuralModel = random_linear(4, 3).into();
    let d = natural(&scm);
    let lin = scm.as_linear().unwrap();
    let (mean0, cov0) = lin.exact_moments(&Intervention::zeros(4));
    assert_eq!(d.mean(), &mean0);
    assert_eq!(d.cov(), &cov0);
    match d {
        InducedDistribution::Exact { shift, .. } => assert!(shift.iter().all(|&s| s == 0.0)),
        _ => panic!("expected exact moments"),
    }
}

#[test]
fn example1_outcome_shift() {
    for alpha2 in [0.5, 2.0, -3.0] {
        let scm = example1(alpha2);
        // c(a) = a1^2 + a2^2
        let cost = CostSpec::quadratic(&[2.0, 2.0]);
        let d = induce(&scm, &Mechanism::linear(&[0.0, 1.0]), &cost, 1.0, &EXACT).unwrap();
        let shift = d.mean() - natural(&scm).mean();
        let expected = alpha2 / (alpha2 * alpha2 + 1.0).sqrt();
        assert!(
            (shift[2] - expected).abs() < 1e-12,
            "alpha2 {alpha2}: {} vs {expected}",
            shift[2]
        );
    }
}

#[test]
fn empirical_mean_concentrates_on_exact() {
    let lin = random_linear(4, 11);
    let scm: StructuralModel = lin.into();
    let cost = CostSpec::quadratic(&[1.0, 2.0, 0.5, 1.5]);
    let f = Mechanism::linear(&[0.3, -1.0, 0.0, 0.7]);
    let exact = induce(&scm, &f, &cost, 1.0, &EXACT).unwrap();
    let count = 100_000;
    let opts = InduceOptions {
        mode: Mode::Empirical { count },
        seed: 5,
        ..EXACT
    };
    let emp = induce(&scm, &f, &cost, 1.0, &opts).unwrap();
    let max_std = exact.cov().diagonal().iter().fold(0.0f64, |m, &v| m.max(v.sqrt()));
    let tol = 4.0 * max_std / (count as f64).sqrt();
    for v in 0..5 {
        assert!((emp.mean()[v] - exact.mean()[v]).abs() < tol, "node {v}");
    }
}

#[test]
fn exact_mode_rejects_nonlinear_inputs() {
    let sq = NodeEquation::polynomial(vec![NodeId(0)], vec![vec![0.0, 1.0]]);
    let poly: StructuralModel = AdditiveScm::new(1, vec![NodeEquation::root(), sq], vec![gauss(1.0); 2])
        .unwrap()
        .into();
    let cost = CostSpec::quadratic(&[1.0]);
    assert!(induce(&poly, &Mechanism::unit(1, NodeId(0)), &cost, 1.0, &EXACT).is_err());
}

#[test]
fn regression_on_deterministic_parent() {
    let scm: StructuralModel = LinearScm::from_edges(1, &[(NodeId(0), NodeId(1), 1.0)], vec![gauss(1.0), gauss(0.5)])
        .unwrap()
        .into();
    let fit = fit_conditional(&natural(&scm), NodeId(1), &[NodeId(0)], RegressionFamily::Linear).unwrap();
    assert!((fit.coefficients[0][0] - 1.0).abs() < 1e-12);
    assert!(fit.intercept.abs() < 1e-12);
}

#[test]
fn intercept_follows_block_formula() {
    let scm: StructuralModel = random_linear(4, 21).into();
    let f = Mechanism::linear(&[1.0, 0.5, -0.5, 0.2]);
    let d = induce(&scm, &f, &CostSpec::quadratic(&[1.0; 4]), 2.0, &EXACT).unwrap();
    let (v, m) = (NodeId(4), [NodeId(0), NodeId(2), NodeId(3)]);
    let fit = fit_conditional(&d, v, &m, RegressionFamily::Linear).unwrap();
    let cov = d.cov();
    let beta = sub_cov(cov, &m, &m).try_inverse().unwrap() * sub_cov(cov, &m, &[v]);
    let mu_m = DVector::from_iterator(3, m.iter().map(|p| d.mean()[p.0]));
    let expected = d.mean()[v.0] - mu_m.dot(&beta.column(0));
    assert!((fit.intercept - expected).abs() < 1e-10);
    for (k, c) in fit.coefficients.iter().enumerate() {
        assert!((c[0] - beta[(k, 0)]).abs() < 1e-10);
    }
}

#[test]
fn polynomial_fit_recovers_square() {
    let sq = NodeEquation::polynomial(vec![NodeId(0)], vec![vec![0.0, 1.0]]);
    let scm: StructuralModel = AdditiveScm::new(1, vec![NodeEquation::root(), sq], vec![gauss(1.0), gauss(0.25)])
        .unwrap()
        .into();
    let samples = scm.sample(100_000, &Intervention::zeros(1), 17).unwrap();
    let d = InducedDistribution::empirical(samples).unwrap();
    let fit = fit_conditional(&d, NodeId(1), &[NodeId(0)], RegressionFamily::Polynomial { degree: 2 }).unwrap();
    assert!((fit.coefficients[0][1] - 1.0).abs() < 0.02, "{:?}", fit.coefficients);
    assert!(fit.coefficients[0][0].abs() < 0.02);
}

#[test]
fn conditional_shift_of_identical_distributions_is_false() {
    let scm: StructuralModel = random_linear(3, 4).into();
    let d = natural(&scm);
    let t = conditional_shift_test(
        &d,
        &d,
        NodeId(1),
        &[NodeId(0)],
        RegressionFamily::Linear,
        &TestOptions::default(),
    )
    .unwrap();
    assert!(!t.shifted);
    assert_eq!(t.statistic, 0.0);
}

#[test]
fn upstream_deployment_shifts_child_conditional() {
    // x1 -> x2 -> y, deploy f = x2.
    let scm: StructuralModel = LinearScm::from_edges(
        2,
        &[(NodeId(0), NodeId(1), 0.8), (NodeId(1), NodeId(2), 1.0)],
        vec![gauss(1.0), gauss(0.5), gauss(1.0)],
    )
    .unwrap()
    .into();
    let d_0 = natural(&scm);
    let d_2 = induce(
        &scm,
        &Mechanism::unit(2, NodeId(1)),
        &CostSpec::quadratic(&[1.0, 1.0]),
        1.0,
        &EXACT,
    )
    .unwrap();
    let t = conditional_shift_test(
        &d_2,
        &d_0,
        NodeId(1),
        &[NodeId(0)],
        RegressionFamily::Linear,
        &TestOptions::default(),
    )
    .unwrap();
    let expected = intercept_shift(&d_2, &d_0, NodeId(1), &[NodeId(0)]);
    assert!(t.shifted);
    assert!((t.statistic - expected.abs()).abs() < 1e-10);
    // Only the direct intervention on x2 survives conditioning on x1.
    let a2 = d_2.mean()[1] - d_0.mean()[1] - 0.8 * (d_2.mean()[0] - d_0.mean()[0]);
    assert!((expected - a2).abs() < 1e-10);
}

#[test]
fn mean_shift_of_identical_distributions_is_false() {
    let scm: StructuralModel = random_linear(3, 8).into();
    let d = natural(&scm);
    for v in 0..4 {
        assert!(
            !mean_shift_test(&d, &d, NodeId(v), &TestOptions::default())
                .unwrap()
                .shifted
        );
    }
}

fn isolation(d_0: &InducedDistribution, scm: &StructuralModel, i: NodeId) -> Mechanism {
    let neighbours = scm.graph().skeleton().neighbors(i);
    Mechanism::node_minus_model(
        i,
        fit_conditional(d_0, i, &neighbours, RegressionFamily::Linear).unwrap(),
    )
    .unwrap()
}

#[test]
fn isolating_a_leaf_moves_only_the_leaf() {
    // x1 -> y, y -> x2, x1 -> x2: x2 is a leaf.
    let scm: StructuralModel = LinearScm::from_edges(
        2,
        &[
            (NodeId(0), NodeId(2), 1.0),
            (NodeId(2), NodeId(1), 0.7),
            (NodeId(0), NodeId(1), -0.4),
        ],
        vec![gauss(1.0), gauss(1.0), gauss(0.5)],
    )
    .unwrap()
    .into();
    let d_0 = natural(&scm);
    // c(a) = a_i^2 at b = 1 gives a_i = 1.
    let cost = CostSpec::quadratic(&[2.0, 2.0]);
    let d = induce(&scm, &isolation(&d_0, &scm, NodeId(1)), &cost, 1.0, &EXACT).unwrap();
    let shift = d.mean() - d_0.mean();
    assert!((shift[1] - 1.0).abs() < 1e-10, "{shift}");
    assert!(shift[0].abs() < 1e-10 && shift[2].abs() < 1e-10, "{shift}");
}

#[test]
fn isolating_a_non_leaf_moves_another_node() {
    let mut checked = 0;
    for seed in 0..20 {
        let scm: StructuralModel = random_linear(4, 100 + seed).into();
        let d_0 = natural(&scm);
        let cost = CostSpec::quadratic(&[1.0; 4]);
        for i in (0..4).map(NodeId) {
            if scm.graph().children(i).is_empty() {
                continue;
            }
            let d = induce(&scm, &isolation(&d_0, &scm, i), &cost, 1.0, &EXACT).unwrap();
            let shift = d.mean() - d_0.mean();
            let br = best_response(
                &isolation(&d_0, &scm, i),
                &scm,
                &cost,
                1.0,
                &[0.0; 5],
                &NumericOptions::default(),
            )
            .unwrap();
            let x0 = scm.propagate(&[0.0; 5], &[0.0; 5]);
            let x1 = scm.propagate(&[0.0; 5], br.a_star.as_slice());
            for v in 0..5 {
                assert!((shift[v] - (x1[v] - x0[v])).abs() < 1e-10);
            }
            let others = (0..5).filter(|&v| v != i.0).map(|v| shift[v].abs()).fold(0.0, f64::max);
            assert!(others > 1e-7, "seed {seed} node {i}: {shift}");
            checked += 1;
        }
    }
    assert!(checked > 10);
}

#[test]
fn faithfulness_examples() {
    let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let sigma_mv = DVector::from_vec(vec![0.7, -0.3]);
    let zero = DVector::zeros(2);
    assert!(!faithfulness_diagnostic(&zero, &sigma, &sigma_mv, 0.0, 1e-7).unwrap());
    assert!(faithfulness_diagnostic(&zero, &sigma, &sigma_mv, 1.0, 1e-7).unwrap());
    let delta_m = DVector::from_vec(vec![1.0, 2.0]);
    let cancelling = delta_m.dot(&(sigma.clone().try_inverse().unwrap() * &sigma_mv));
    assert!(!faithfulness_diagnostic(&delta_m, &sigma, &sigma_mv, cancelling, 1e-7).unwrap());
    assert!(faithfulness_diagnostic(&delta_m, &sigma, &sigma_mv, cancelling + 1e-3, 1e-7).unwrap());
}

#[test]
fn singular_regressors_are_reported() {
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    let v = DVector::from_vec(vec![1.0, 1.0]);
    assert!(faithfulness_diagnostic(&v, &sigma, &v, 0.0, 1e-7).is_err());
}

fn weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 4).prop_filter("nonzero", |w| w.iter().any(|v| v.abs() > 1e-3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_covariance_is_deployment_invariant(seed in 0u64..1000, w in weights(), b in 0.1f64..5.0) {
        let scm: StructuralModel = random_linear(4, seed).into();
        let d_0 = natural(&scm);
        let d = induce(&scm, &Mechanism::linear(&w), &CostSpec::quadratic(&[1.0, 2.0, 3.0, 0.5]), b, &EXACT).unwrap();
        prop_assert_eq!(d.cov(), d_0.cov());
    }

    #[test]
    fn natural_fit_on_true_parents_recovers_weights(seed in 0u64..1000) {
        let lin = random_linear(4, seed);
        let scm: StructuralModel = lin.clone().into();
        let d_0 = natural(&scm);
        for v in (0..5).map(NodeId) {
            let parents = scm.graph().parents(v);
            if parents.is_empty() {
                continue;
            }
            let fit = fit_conditional(&d_0, v, &parents, RegressionFamily::Linear).unwrap();
            for (k, p) in parents.iter().enumerate() {
                prop_assert!((fit.coefficients[k][0] - lin.weights()[(v.0, p.0)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn intercept_difference_matches_closed_form(seed in 0u64..1000, w in weights()) {
        let scm: StructuralModel = random_linear(4, seed).into();
        let d_0 = natural(&scm);
        let d = induce(&scm, &Mechanism::linear(&w), &CostSpec::quadratic(&[1.0; 4]), 1.0, &EXACT).unwrap();
        let (v, m) = (NodeId(4), [NodeId(0), NodeId(1)]);
        let f_i = fit_conditional(&d, v, &m, RegressionFamily::Linear).unwrap();
        let f_0 = fit_conditional(&d_0, v, &m, RegressionFamily::Linear).unwrap();
        let expected = intercept_shift(&d, &d_0, v, &m);
        prop_assert!((f_i.intercept - f_0.intercept - expected).abs() < 1e-8);
    }

    #[test]
    fn conditional_shift_is_symmetric(seed in 0u64..1000, w in weights()) {
        let scm: StructuralModel = random_linear(4, seed).into();
        let d_0 = natural(&scm);
        let d = induce(&scm, &Mechanism::linear(&w), &CostSpec::quadratic(&[1.0; 4]), 1.0, &EXACT).unwrap();
        let opts = TestOptions::default();
        let given = [NodeId(2), NodeId(4)];
        let ab = conditional_shift_test(&d, &d_0, NodeId(0), &given, RegressionFamily::Linear, &opts).unwrap();
        let ba = conditional_shift_test(&d_0, &d, NodeId(0), &given, RegressionFamily::Linear, &opts).unwrap();
        prop_assert_eq!(ab.shifted, ba.shifted);
        prop_assert!((ab.statistic - ba.statistic).abs() < 1e-12);
    }
}
