use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use csp_bench::{linear_instance, polynomial_instance, rng};
use csp_core::agents::best_response;
use csp_core::pareto::{offline_front, solve_qp, FrontOptions};
use csp_core::{Mechanism, NumericOptions, StructuralModel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn best_responses(c: &mut Criterion) {
    let mut group = c.benchmark_group("best_response");
    let (lin, cost) = linear_instance(6, 1);
    let scm: StructuralModel = lin.into();
    let f = Mechanism::linear(&[0.4, -0.2, 0.7, 0.1, -0.5, 0.3]);
    let u = vec![0.0; 7];
    let opts = NumericOptions::default();
    group.bench_function("closed_form_n6", |b| {
        b.iter(|| best_response(black_box(&f), &scm, &cost, 1.0, &u, &opts).unwrap())
    });
    let (poly, cost) = polynomial_instance(4, 2);
    let f = Mechanism::linear(&[0.4, -0.2, 0.7, 0.1]);
    let u = vec![0.3; 5];
    group.bench_function("numeric_polynomial_n4", |b| {
        b.iter(|| best_response(black_box(&f), &poly, &cost, 1.0, &u, &opts).unwrap())
    });
    group.finish();
}

fn qp(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_qp");
    for n in [4usize, 8, 16] {
        let mut r = rng(n as u64);
        let m = DMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
        let h = &m * m.transpose() + DMatrix::identity(n, n);
        let cvec = DVector::from_fn(n, |_, _| r.gen_range(-1.0..1.0));
        let g = DMatrix::from_fn(n / 2, n, |_, _| r.gen_range(-1.0..1.0));
        let d = DVector::from_element(n / 2, -0.1);
        let x0 = DVector::zeros(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_qp(&h, &cvec, &g, &d, &x0).unwrap())
        });
    }
    group.finish();
}

fn fronts(c: &mut Criterion) {
    let mut group = c.benchmark_group("offline_front");
    group.sample_size(10);
    for n in [3usize, 5] {
        let (scm, cost) = linear_instance(n, 10 + n as u64);
        let opts = FrontOptions::default();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| offline_front(&scm, &cost, 1.0, &opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, best_responses, qp, fronts);
criterion_main!(benches);
