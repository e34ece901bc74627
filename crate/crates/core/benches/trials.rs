use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use glassrisk::experiments::{correlation_histogram_of, run_margin_sweep, run_scaling, ScalingConfig, SweepConfig};
use glassrisk::parallel::Execution;
use glassrisk::{compute_returns, synth_prices, CorrelationModel, PriceMatrix, ReturnMode};

const MODES: [(&str, Execution); 2] = [("serial", Execution::Serial), ("parallel", Execution::Parallel)];

fn universe() -> PriceMatrix {
    synth_prices(200, 1000, CorrelationModel::RandomFactor { factors: 3 }, 7).unwrap()
}

fn sweep(c: &mut Criterion) {
    let prices = universe();
    let mut group = c.benchmark_group("margin_sweep");
    group.sample_size(10);
    for (name, execution) in MODES {
        let cfg = SweepConfig { n: 12, trials: 32, execution, ..SweepConfig::default() };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| run_margin_sweep(&prices, cfg).unwrap())
        });
    }
    group.finish();
}

fn scaling(c: &mut Criterion) {
    let prices = universe();
    let mut group = c.benchmark_group("scaling");
    group.sample_size(10);
    for (name, execution) in MODES {
        let cfg = ScalingConfig { trials: 32, execution, ..ScalingConfig::default() };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| run_scaling(&prices, cfg).unwrap())
        });
    }
    group.finish();
}

fn histogram(c: &mut Criterion) {
    let returns = compute_returns(&universe(), ReturnMode::Log);
    let mut group = c.benchmark_group("correlation_histogram");
    for (name, execution) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| correlation_histogram_of(&returns.values, 40, execution).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep, scaling, histogram);
criterion_main!(benches);
