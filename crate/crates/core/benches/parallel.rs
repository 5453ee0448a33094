use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use slipctl_core::control::{fd_gradient_oracle, CostModel, CostParams};
use slipctl_core::exec::{set_execution, Execution};
use slipctl_core::fields::{FrictionField, VelocityField};
use slipctl_core::linearized::gateaux_discrepancy;
use slipctl_core::mesh::{Grid, TimeGrid};
use slipctl_core::samples::{random_source, rng, smooth_control};
use slipctl_core::state::{solve_state, StateProblem};

fn problem(n: usize, nt: usize) -> StateProblem {
    let grid = Grid::new(n, n, 1.0, 1.0).unwrap();
    let time = TimeGrid::new(0.5, nt).unwrap();
    let c = smooth_control(&grid, &time, &mut rng(3), 0.5, 3.0, 1e3);
    StateProblem::new(
        grid.clone(),
        time,
        VelocityField::zeros(&grid),
        c,
        FrictionField::constant(&grid, &time, 1.0),
    )
}

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench_gateaux(c: &mut Criterion) {
    let pb = problem(12, 8);
    let base = solve_state(&pb).unwrap();
    let dir = smooth_control(&pb.grid, &pb.time, &mut rng(5), 1.0, 3.0, 1e3);
    let eps = [1e-1, 1e-2, 1e-3, 1e-4];
    let mut group = c.benchmark_group("gateaux_sweep");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            set_execution(mode);
            b.iter(|| gateaux_discrepancy(&pb, &base, &dir, &eps).unwrap());
        });
    }
    group.finish();
}

fn bench_fd_oracle(c: &mut Criterion) {
    let pb = problem(10, 6);
    let yd = random_source(&pb.grid, &pb.time, &mut rng(7), 2);
    let params = CostParams::new(yd, 0.1, 0.1, 1e3, 3.0).unwrap();
    let start = pb.controls.clone();
    let dir = smooth_control(&pb.grid, &pb.time, &mut rng(9), 1.0, 3.0, 1e3);
    let model = CostModel::new(pb, params).unwrap();
    let eps = [1e-2, 1e-3, 1e-4];
    let mut group = c.benchmark_group("fd_gradient_oracle");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            set_execution(mode);
            b.iter(|| fd_gradient_oracle(&model, &start, &dir, &eps).unwrap());
        });
    }
    group.finish();
}

criterion_group!(benches, bench_gateaux, bench_fd_oracle);
criterion_main!(benches);
