use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;

use drk_core::datagen::CoefficientSpec;
use drk_core::exec::force_sequential;
use drk_core::experiment::{run_experiment, DatasetSpec, ExperimentSpec, KnockoffSource};
use drk_core::metrics::{sliced_wasserstein_distance, EmpiricalSample, ProjectionConfig, TransportOrder};
use drk_core::rng;

fn sample(n: usize, d: usize, seed: u64) -> EmpiricalSample {
    let mut r = rng::rng(seed);
    EmpiricalSample::new(Array2::from_shape_fn((n, d), |_| r.sample(StandardNormal))).unwrap()
}

fn modes() -> [(&'static str, bool); 2] {
    [("parallel", false), ("sequential", true)]
}

fn swd(c: &mut Criterion) {
    let a = sample(2000, 60, 1);
    let b = sample(2000, 60, 2);
    let cfg = ProjectionConfig::seeded(256, TransportOrder::W2, 3);
    let mut group = c.benchmark_group("swd_2000x60_256dirs");
    for (label, seq) in modes() {
        group.bench_function(BenchmarkId::from_parameter(label), |bench| {
            force_sequential(seq);
            bench.iter(|| sliced_wasserstein_distance(&a, &b, &cfg).unwrap());
        });
    }
    group.finish();
    force_sequential(false);
}

fn oracle_experiment(c: &mut Criterion) {
    let spec = ExperimentSpec {
        name: "bench".into(),
        dataset: DatasetSpec::Gaussian,
        n: 300,
        p: 20,
        coefficients: CoefficientSpec {
            scale_divisor: 2.0,
            num_nonnull: 5,
        },
        knockoff: KnockoffSource::Oracle,
        num_repeats: 8,
        base_seed: 7,
        ..ExperimentSpec::desk()
    };
    let mut group = c.benchmark_group("oracle_experiment_8_repeats");
    group.sample_size(10);
    for (label, seq) in modes() {
        group.bench_function(BenchmarkId::from_parameter(label), |bench| {
            force_sequential(seq);
            bench.iter(|| run_experiment(&spec).unwrap());
        });
    }
    group.finish();
    force_sequential(false);
}

criterion_group!(benches, swd, oracle_experiment);
criterion_main!(benches);
