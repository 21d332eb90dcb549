use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion, Throughput};
use nfl::framework::{Op, RequestBatch};
use nfl::workloads::{gen_dataset, DatasetKind, DatasetSpec};
use nfl::{train_flow, FlowConfig, FlowMode, Index, IndexConfig, NflConfig, NflIndex, RefMap};
use std::hint::black_box;

const N: usize = 200_000;

fn dataset(kind: DatasetKind) -> Vec<(f64, u64)> {
    gen_dataset(&DatasetSpec { kind, n: N, seed: 1 })
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, k)| (k, i as u64))
        .collect()
}

fn probes(pairs: &[(f64, u64)]) -> Vec<Op> {
    pairs.iter().step_by(97).map(|p| Op::Lookup(p.0)).take(256).collect()
}

fn lookups(c: &mut Criterion) {
    for kind in [DatasetKind::Lognormal, DatasetKind::Uniform { lo: 0.0, hi: 1.0 }] {
        let name = kind.name();
        let pairs = dataset(kind);
        let keys: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let flow = train_flow(&keys, &FlowConfig::default()).unwrap();
        let ops = probes(&pairs);
        let mut g = c.benchmark_group(format!("lookup_batch256/{name}"));
        g.throughput(Throughput::Elements(ops.len() as u64));
        for mode in [FlowMode::On, FlowMode::Off] {
            let config = NflConfig {
                flow_mode: mode,
                ..NflConfig::default()
            };
            let mut idx = NflIndex::bulkload(&pairs, flow.clone(), config).unwrap();
            let mut batch = RequestBatch::new(ops.clone());
            g.bench_function(BenchmarkId::new("nfl", mode), |b| {
                b.iter(|| {
                    idx.execute(&mut batch);
                    black_box(&batch.results);
                })
            });
        }
        let afli = Index::bulkload(&pairs, IndexConfig::default()).unwrap();
        g.bench_function("afli", |b| b.iter(|| ops.iter().map(|o| afli.lookup(o.key())).collect::<Vec<_>>()));
        let map = RefMap::bulkload(&pairs).unwrap();
        g.bench_function("btree", |b| b.iter(|| ops.iter().map(|o| map.lookup(o.key())).collect::<Vec<_>>()));
        g.finish();
    }
}

fn inserts(c: &mut Criterion) {
    let all = dataset(DatasetKind::Lognormal);
    let (bulk, rest): (Vec<_>, Vec<_>) = all.iter().enumerate().partition(|(i, _)| i % 2 == 0);
    let bulk: Vec<(f64, u64)> = bulk.into_iter().map(|(_, p)| *p).collect();
    let fresh: Vec<Op> = rest.into_iter().take(4096).map(|(_, p)| Op::Insert(p.0, p.1)).collect();
    let keys: Vec<f64> = bulk.iter().map(|p| p.0).collect();
    let flow = train_flow(&keys, &FlowConfig::default()).unwrap();
    let base = NflIndex::bulkload(&bulk, flow, NflConfig::default()).unwrap();
    let mut g = c.benchmark_group("insert_4096/lognormal");
    g.throughput(Throughput::Elements(fresh.len() as u64));
    g.sample_size(20);
    g.bench_function("nfl", |b| {
        b.iter_batched(
            || (base.clone(), RequestBatch::new(fresh.clone())),
            |(mut idx, mut batch)| {
                idx.execute(&mut batch);
                idx
            },
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

criterion_group!(benches, lookups, inserts);
criterion_main!(benches);
