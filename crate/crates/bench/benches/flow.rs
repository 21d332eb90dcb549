use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use nfl::workloads::{gen_dataset, DatasetKind, DatasetSpec};
use nfl::{train_flow, FlowConfig};
use std::hint::black_box;

fn transform_batch_sizes(c: &mut Criterion) {
    let keys = gen_dataset(&DatasetSpec {
        kind: DatasetKind::Lognormal,
        n: 100_000,
        seed: 3,
    })
    .unwrap();
    let flow = train_flow(&keys, &FlowConfig::default()).unwrap();
    let probe = &keys[..8192];
    let mut out = vec![0.0; probe.len()];
    let mut g = c.benchmark_group("flow_transform");
    g.throughput(Throughput::Elements(probe.len() as u64));
    for batch in [1usize, 8, 32, 128, 256, 1024, 2048] {
        g.bench_with_input(BenchmarkId::from_parameter(batch), &batch, |b, &batch| {
            b.iter(|| {
                for (k, o) in probe.chunks(batch).zip(out.chunks_mut(batch)) {
                    flow.transform_batch(k, o);
                }
                black_box(&out);
            })
        });
    }
    g.finish();
}

criterion_group!(benches, transform_batch_sizes);
criterion_main!(benches);
