use std::hint::black_box;

use complexdyn::ensembles::{sample_matrix, EnsembleSpec, EntryLaw, InitialLaw};
use complexdyn::harness::{simulate, ExperimentPlan, NormCheck};
use complexdyn::par::Execution;
use complexdyn::propagator::{expm_action, DEFAULT_TOL};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn spec(n: usize) -> EnsembleSpec {
    EnsembleSpec {
        n,
        symmetric: false,
        entry_law: EntryLaw::gaussian(1.0).unwrap(),
        initial_law: InitialLaw::Ones,
        seed: 1,
    }
}

fn replicas(c: &mut Criterion) {
    let mut plan = ExperimentPlan::new(spec(200), 0.0, vec![0.5, 1.0], 16);
    plan.norm_check = NormCheck::Off;
    let mut group = c.benchmark_group("simulate_n200_r16");
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_function(name, |b| b.iter(|| simulate(black_box(&plan), 200, false, exec).unwrap()));
    }
    group.finish();
}

fn kernels(c: &mut Criterion) {
    let mut group = c.benchmark_group("kernels");
    for n in [250, 1000] {
        let a = sample_matrix(&spec(n)).unwrap();
        let v = vec![1.0; n];
        group.bench_with_input(BenchmarkId::new("matvec", n), &n, |b, _| b.iter(|| a.matvec(black_box(&v))));
        group.bench_with_input(BenchmarkId::new("expm_action_t1", n), &n, |b, _| {
            b.iter(|| expm_action(&a, black_box(&v), 1.0, DEFAULT_TOL).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, replicas, kernels);
criterion_main!(benches);
