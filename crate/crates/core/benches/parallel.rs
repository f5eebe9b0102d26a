//! Sequential vs rayon execution on the hot paths.
//!
//! Build with `--no-default-features` to measure the fallback with both
//! variants forced sequential.

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use tomotact::jacobian::build_jacobian;
use tomotact::mesh::{apply_regions, build_shell_mesh, build_volume_mesh, ContactSpec, ElectrodeLayout, GradientSpec};
use tomotact::protocol::acquire_frame;
use tomotact::studies::{run_condition, SimConfig, SweepGrid};
use tomotact::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn frame(c: &mut Criterion) {
    let g = GradientSpec::across(0.05, 2.0, 10.0).unwrap();
    let base = build_volume_mesh(60.0, 60.0, 10.0, (18, 18, 3), ElectrodeLayout::default(), &g).unwrap();
    let mesh = apply_regions(&base, &ContactSpec::centered(4.0, 0.1), None).unwrap().0;
    let mut group = c.benchmark_group("acquire_frame");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| acquire_frame(black_box(&mesh), 2.0, exec).unwrap())
        });
    }
    group.finish();
}

fn jacobian(c: &mut Criterion) {
    let shell = build_shell_mesh(60.0, 60.0, 20, ElectrodeLayout::default(), 1.0).unwrap();
    let mut group = c.benchmark_group("build_jacobian");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| build_jacobian(black_box(&shell), 2.0, exec).unwrap())
        });
    }
    group.finish();
}

fn condition(c: &mut Criterion) {
    let cfg = SimConfig { volume_divisions: [12, 12, 2], shell_divisions: 12, ..SimConfig::default() };
    let recon = cfg.reconstructor(Execution::Parallel).unwrap();
    let grid = SweepGrid::new(
        vec![0.2],
        vec![0.2],
        vec![0.001, 0.01, 0.1, 1.0, 10.0],
        vec![(-20.0, 0.0), (0.0, 0.0), (20.0, 0.0)],
    )
    .unwrap();
    let mut group = c.benchmark_group("run_condition");
    group.sample_size(10).measurement_time(Duration::from_secs(10));
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_condition(0.2, 0.2, &grid, &cfg, &recon, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, frame, jacobian, condition);
criterion_main!(benches);
