use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use trapwalk::annealed::{annealed_given_path_mc, annealed_total_mc, Method, Model};
use trapwalk::gibbs::{sample_ensemble, EnsembleSpec};
use trapwalk::harness::thin_tail_experiment;
use trapwalk::par::{set_execution, Execution};
use trapwalk::walk::{sample_path, JumpKernel};
use trapwalk::RngStream;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn range_mc(c: &mut Criterion) {
    let k = JumpKernel::ssrw();
    let x = sample_path(&k, 1.0, 0, 32.0, &mut RngStream::new(1, 0).rng()).unwrap();
    let mut g = c.benchmark_group("given_path_range_mc");
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::new(name, "t32_4000"), |b| {
            set_execution(mode);
            b.iter(|| annealed_given_path_mc(black_box(&x), 1.0, 1.0, &k, f64::INFINITY, 4000, RngStream::new(2, 0)).unwrap())
        });
    }
    g.finish();
}

fn total_mc(c: &mut Criterion) {
    let model = Model::ssrw(0.5);
    let mut g = c.benchmark_group("total_mc");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::new(name, "t16_50x500"), |b| {
            set_execution(mode);
            b.iter(|| annealed_total_mc(&model, 16.0, 50, 500, RngStream::new(3, 0)).unwrap())
        });
    }
    g.finish();
}

fn ensemble_fk(c: &mut Criterion) {
    let model = Model::ssrw(f64::INFINITY);
    let spec = EnsembleSpec {
        t: 20.0,
        n_paths: 200,
        fields_per_path: 1,
        weight_method: Method::FeynmanKac,
        window_eps: 1e-6,
    };
    let mut g = c.benchmark_group("ensemble_fk");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::new(name, "t20_200"), |b| {
            set_execution(mode);
            b.iter(|| sample_ensemble(&model, &spec, RngStream::new(4, 0)).unwrap())
        });
    }
    g.finish();
}

fn thin_tail(c: &mut Criterion) {
    let k = JumpKernel::ssrw();
    let mut g = c.benchmark_group("thin_tail");
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::new(name, "t100_10000"), |b| {
            set_execution(mode);
            b.iter(|| thin_tail_experiment(&k, 1.0, 100.0, 1.0, 1.0, 10_000, RngStream::new(5, 0)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, range_mc, total_mc, ensemble_fk, thin_tail);
criterion_main!(benches);
