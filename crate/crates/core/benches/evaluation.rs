use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use padnas_core::evolution::{ces_search, CesConfig, Problem};
use padnas_core::latency::{synth_latency_table, CostModel};
use padnas_core::oracle::OracleConfig;
use padnas_core::{Execution, LatencyBand, Oracle, SearchSpace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn batch_evaluation(c: &mut Criterion) {
    let space = SearchSpace::build("large").unwrap();
    let table = synth_latency_table(&space, &CostModel::default(), &mut ChaCha8Rng::seed_from_u64(0));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let archs: Vec<_> = (0..2048).map(|_| space.sample_uniform(&mut rng)).collect();
    let mut group = c.benchmark_group("evaluate_batch");
    for exec in [Execution::Parallel, Execution::Sequential] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            // A fresh oracle per iteration keeps the cache cold.
            b.iter_batched(
                || Oracle::new(OracleConfig::supernet(0, 0.002), &space).unwrap(),
                |oracle| oracle.evaluate_batch(&table, &archs, exec).unwrap(),
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn search(c: &mut Criterion) {
    let space = SearchSpace::build("basic").unwrap();
    let table = synth_latency_table(&space, &CostModel::default(), &mut ChaCha8Rng::seed_from_u64(0));
    let band = LatencyBand::new(60.0, 70.0).unwrap();
    let cfg = CesConfig {
        iterations: 10,
        ..CesConfig::default()
    };
    let mut group = c.benchmark_group("ces_search");
    group.sample_size(10);
    for exec in [Execution::Parallel, Execution::Sequential] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter_batched(
                || Oracle::new(OracleConfig::supernet(0, 0.002), &space).unwrap(),
                |oracle| {
                    let problem = Problem::new(&space, &table, &band, &oracle).with_execution(exec);
                    ces_search(&problem, &cfg).unwrap()
                },
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, batch_evaluation, search);
criterion_main!(benches);
