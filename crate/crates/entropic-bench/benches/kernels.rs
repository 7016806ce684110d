//! Criterion benchmarks for the hot kernels: path generation, the
//! regression projection, one policy-evaluation sweep, and the scalar
//! node solve. Run with `cargo bench -p entropic-bench`.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use entropic::lattice::solve_regularized_node;
use entropic::model::{BasisSpec, MarketModel, Payoff, TimeGrid};
use entropic::paths::simulate;
use entropic::pia::{init_surface, pia_sweep};
use entropic::regression::RegressionPlan;

fn one_asset_put() -> (MarketModel, Payoff, TimeGrid) {
    (
        MarketModel::new(vec![100.0], 0.05, 0.0, 0.2).expect("valid market"),
        Payoff::Put { strike: 100.0 },
        TimeGrid::new(1.0, 100).expect("valid grid"),
    )
}

fn bench_simulate(c: &mut Criterion) {
    let (model, payoff, grid) = one_asset_put();
    let mut group = c.benchmark_group("paths");
    group.sample_size(20);
    group.bench_function("simulate_100k_x_100", |b| {
        b.iter(|| simulate(&model, &payoff, &grid, 100_000, black_box(1)).unwrap())
    });
    group.finish();
}

fn bench_regression(c: &mut Criterion) {
    let (model, payoff, grid) = one_asset_put();
    let batch = simulate(&model, &payoff, &grid, 100_000, 1).expect("simulation succeeds");
    let spec = BasisSpec::default_for_dim(1);

    let mut group = c.benchmark_group("regression");
    group.sample_size(10);
    group.bench_function("plan_build_100k_x_100", |b| {
        b.iter(|| RegressionPlan::build(&batch, &spec).unwrap())
    });

    let plan = RegressionPlan::build(&batch, &spec).expect("plan builds");
    let target: Vec<f64> = batch.step_payoffs(grid.steps()).to_vec();
    let mut out = vec![0.0; target.len()];
    group.sample_size(100);
    group.bench_function("cond_exp_100k", |b| {
        b.iter(|| {
            plan.cond_exp_into(50, black_box(&target), &mut out)
                .unwrap()
        })
    });
    group.finish();
}

fn bench_sweep(c: &mut Criterion) {
    let (model, payoff, grid) = one_asset_put();
    let batch = simulate(&model, &payoff, &grid, 100_000, 1).expect("simulation succeeds");
    let plan = RegressionPlan::build(&batch, &BasisSpec::default_for_dim(1)).expect("plan builds");
    let surface = init_surface(&plan).expect("surface initializes");

    let mut group = c.benchmark_group("pia");
    group.sample_size(10);
    group.bench_function("sweep_100k_x_100", |b| {
        b.iter_batched(
            || surface.clone(),
            |mut s| pia_sweep(&mut s, &plan, black_box(0.01)).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn bench_node_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("lattice");
    group.bench_function("solve_regularized_node", |b| {
        b.iter(|| {
            solve_regularized_node(
                black_box(5.0),
                black_box(5.2),
                black_box(0.01),
                black_box(0.05),
                black_box(0.01),
            )
            .unwrap()
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_simulate,
    bench_regression,
    bench_sweep,
    bench_node_solve
);
criterion_main!(benches);
