use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use jmeas_core::boundary::{sample_boundary, SamplerConfig};
use jmeas_core::catalog::example_qutrit_triple;
use jmeas_core::exec::ExecMode;
use jmeas_core::povm::Shape;
use jmeas_core::search::{min_parent_size_with, trivial_lower_bound, SearchOptions};

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn boundary_sampling(c: &mut Criterion) {
    let shape = Shape::uniform(2, 2, 2).unwrap();
    let mut group = c.benchmark_group("sample_boundary_2_2_2_n32");
    group.sample_size(10);
    for (name, mode) in MODES {
        let cfg = SamplerConfig { mode, ..SamplerConfig::default() };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| sample_boundary(&shape, 32, 7, cfg).unwrap())
        });
    }
    group.finish();
}

fn support_scan(c: &mut Criterion) {
    let ms = example_qutrit_triple();
    let mut group = c.benchmark_group("min_parent_size_qutrit");
    group.sample_size(10);
    for (name, mode) in MODES {
        let mut opts = SearchOptions::new(trivial_lower_bound(&ms), 8);
        opts.mode = mode;
        group.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| min_parent_size_with(&ms, opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, boundary_sampling, support_scan);
criterion_main!(benches);
