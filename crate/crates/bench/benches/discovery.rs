use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use csp_bench::linear_instance;
use csp_core::discovery::{discover_general, discover_per_node, GeneralOptions, PerNodeOptions, SimulatedEnvironment};
use csp_core::pareto::{explore_linear, ExploreOptions};
use csp_core::{CostSpec, Mode, StructuralModel};

fn env(scm: &StructuralModel, cost: &CostSpec, mode: Mode) -> SimulatedEnvironment {
    SimulatedEnvironment::new(scm.clone(), cost.clone(), 1.0, mode, 7).unwrap()
}

fn per_node(c: &mut Criterion) {
    let mut group = c.benchmark_group("discover_per_node");
    group.sample_size(10);
    for n in [3usize, 6] {
        let (lin, cost) = linear_instance(n, n as u64);
        let scm: StructuralModel = lin.into();
        let skeleton = scm.graph().skeleton().clone();
        group.bench_with_input(BenchmarkId::new("exact", n), &n, |b, _| {
            b.iter(|| {
                discover_per_node(
                    &mut env(&scm, &cost, Mode::Exact),
                    &skeleton,
                    &PerNodeOptions::default(),
                )
                .unwrap()
            })
        });
        group.bench_with_input(BenchmarkId::new("empirical_10k", n), &n, |b, _| {
            let mode = Mode::Empirical { count: 10_000 };
            b.iter(|| discover_per_node(&mut env(&scm, &cost, mode), &skeleton, &PerNodeOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn general(c: &mut Criterion) {
    let mut group = c.benchmark_group("discover_general");
    group.sample_size(10);
    for n in [3usize, 5] {
        let (lin, _) = linear_instance(n, 20 + n as u64);
        let scm: StructuralModel = lin.into();
        let cost = CostSpec::linear(&vec![1.0; n]);
        let skeleton = scm.graph().skeleton().clone();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                discover_general(
                    &mut env(&scm, &cost, Mode::Exact),
                    &skeleton,
                    &GeneralOptions::default(),
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn explore(c: &mut Criterion) {
    let mut group = c.benchmark_group("explore_linear");
    group.sample_size(10);
    for n in [3usize, 6] {
        let (lin, _) = linear_instance(n, 30 + n as u64);
        let scm: StructuralModel = lin.into();
        let cost = CostSpec::linear(&vec![1.0; n]);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| explore_linear(&mut env(&scm, &cost, Mode::Exact), n, &ExploreOptions::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, per_node, general, explore);
criterion_main!(benches);
