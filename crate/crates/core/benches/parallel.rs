use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use gridres::agent::{evaluate, Policy, Scenario};
use gridres::env::{ChronicsParams, ContingencyEvent, EnvConfig};
use gridres::par::ExecMode;
use gridres::Grid;

fn scenario() -> Scenario {
    Scenario::synthetic(Grid::case14(), EnvConfig::default(), 50, ChronicsParams::default())
        .with_contingency(ContingencyEvent::new(vec![1, 4]))
}

fn evaluation(c: &mut Criterion) {
    let sc = scenario();
    let mut group = c.benchmark_group("evaluate_do_nothing");
    group.sample_size(10);
    for (name, mode) in [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)] {
        group.bench_with_input(BenchmarkId::new(name, 16), &mode, |b, &mode| {
            b.iter(|| evaluate(Policy::DoNothing, &sc, 16, 7, mode).unwrap())
        });
    }
    group.finish();
}

fn power_flow(c: &mut Criterion) {
    let grids: Vec<Grid> = (0..64)
        .map(|i| {
            let mut g = Grid::case14();
            g.disconnect_line(i % g.n_lines());
            g
        })
        .collect();
    let mut group = c.benchmark_group("power_flow_sweep");
    for (name, mode) in [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)] {
        group.bench_with_input(BenchmarkId::new(name, grids.len()), &mode, |b, &mode| {
            b.iter(|| {
                gridres::par::map(mode, &grids, |g| {
                    let mut g = g.clone();
                    g.solve().map(|r| r.n_islands()).unwrap_or(0)
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, evaluation, power_flow);
criterion_main!(benches);
