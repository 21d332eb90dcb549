//! Benchmark runner shared by the CLI and the acceptance tests.
//!
//! A run bulk-loads an engine, warms it with untimed lookups, then times
//! `execute` around every request batch. Tail latencies follow the batch
//! rule: sort batch latencies ascending, pick the batch at the requested
//! nearest rank, divide by that batch's op count.

use crate::afli::{Index, IndexConfig, IndexError};
use crate::conflict::tail_conflict_of;
use crate::framework::{FlowMode, NflConfig, NflError, NflIndex, Op, OpOutcome, RequestBatch};
use crate::keycodec::fit_codec;
use crate::numflow::{train_flow, FlowConfig, FlowError, FlowParams};
use crate::oracle::RefMap;
use crate::workloads::{gen_ops, Mix, WorkloadError, WorkloadSpec};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Nfl(#[from] NflError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("invalid benchmark: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EngineKind {
    #[default]
    Nfl,
    Afli,
    Oracle,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Nfl => "nfl",
            Self::Afli => "afli",
            Self::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for EngineKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "nfl" => Ok(Self::Nfl),
            "afli" => Ok(Self::Afli),
            "oracle" => Ok(Self::Oracle),
            other => Err(format!("unknown engine {other:?}")),
        }
    }
}

impl std::fmt::Display for EngineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub engine: EngineKind,
    pub flow_mode: FlowMode,
    pub workload: WorkloadSpec,
    pub index: IndexConfig,
    /// Used to train a flow when none is supplied.
    pub flow: FlowConfig,
    pub repeat: usize,
    /// Replay every batch on a reference map and count disagreements.
    pub verify: bool,
    /// Dataset label for reports.
    pub dataset: String,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            engine: EngineKind::Nfl,
            flow_mode: FlowMode::Auto,
            workload: WorkloadSpec::default(),
            index: IndexConfig::default(),
            flow: FlowConfig::default(),
            repeat: 5,
            verify: false,
            dataset: "custom".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchSample {
    pub nanos: u64,
    pub ops: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub engine: EngineKind,
    pub workload: Mix,
    pub dataset: String,
    pub n: usize,
    pub ops: usize,
    pub reads: usize,
    pub inserts: usize,
    pub flow_mode: FlowMode,
    pub use_flow: bool,
    pub throughput_mops: f64,
    pub p99_ns: f64,
    pub p9999_ns: f64,
    pub max_ns: f64,
    pub bulk_transform_s: f64,
    pub bulk_build_s: f64,
    pub train_s: f64,
    pub index_bytes: usize,
    pub tail_before: usize,
    pub tail_after: usize,
    pub seed: u64,
    pub mismatches: usize,
    pub samples: Vec<BatchSample>,
}

pub const P99: u64 = 9900;
pub const P9999: u64 = 9999;

/// Per-op latency of the batch at nearest rank `ceil(per_10k * N / 10000)`
/// among batches sorted by total latency (ties by op count). Integer ranks
/// keep the pick exact for every `N`.
pub fn batch_percentile(samples: &[BatchSample], per_10k: u64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by_key(|s| (s.nanos, s.ops));
    let n = sorted.len() as u64;
    let rank = (per_10k * n).div_ceil(10_000).clamp(1, n) as usize;
    let s = sorted[rank - 1];
    s.nanos as f64 / s.ops.max(1) as f64
}

/// Largest per-op latency over all batches.
pub fn max_per_op(samples: &[BatchSample]) -> f64 {
    samples
        .iter()
        .map(|s| s.nanos as f64 / s.ops.max(1) as f64)
        .fold(0.0, f64::max)
}

enum Engine {
    Nfl(Box<NflIndex>),
    Afli(Box<Index>),
    Oracle(RefMap),
}

impl Engine {
    fn execute(&mut self, batch: &mut RequestBatch) {
        match self {
            Engine::Nfl(idx) => idx.execute(batch),
            Engine::Afli(idx) => afli_execute(idx, batch),
            Engine::Oracle(map) => map.execute(batch),
        }
    }

    fn size_bytes(&self) -> usize {
        match self {
            Engine::Nfl(idx) => idx.size_bytes(),
            Engine::Afli(idx) => idx.stats().size_bytes,
            Engine::Oracle(map) => map.size_bytes(),
        }
    }
}

fn afli_execute(index: &mut Index, batch: &mut RequestBatch) {
    batch.results.clear();
    for op in &batch.ops {
        let outcome = match *op {
            Op::Lookup(k) => OpOutcome::Found(index.lookup(k)),
            Op::Insert(k, v) => index.insert(k, v).into(),
            Op::Update(k, v) => index.update(k, v).into(),
            Op::Delete(k) => index.delete(k).into(),
        };
        batch.results.push(outcome);
    }
}

/// Runs the configured benchmark `repeat` times over the same op stream.
/// `flow` is trained on the bulk-load keys when absent and needed.
pub fn run_bench(keys: &[f64], flow: Option<&FlowParams>, cfg: &BenchConfig) -> Result<Vec<BenchReport>, BenchError> {
    if cfg.repeat == 0 {
        return Err(BenchError::Invalid("repeat must be >= 1".into()));
    }
    let workload = gen_ops(keys, &cfg.workload)?;
    let bulk_keys: Vec<f64> = workload.bulk.iter().map(|p| p.0).collect();
    let tail_before = tail_conflict_of(&bulk_keys, cfg.index.alpha, cfg.index.gamma)
        .map_err(|e| BenchError::Invalid(e.to_string()))?;

    let mut train_s = 0.0;
    let flow = match (cfg.engine, flow) {
        (EngineKind::Nfl, Some(f)) => f.clone(),
        (EngineKind::Nfl, None) if cfg.flow_mode != FlowMode::Off => {
            let t = Instant::now();
            let f = train_flow(&bulk_keys, &cfg.flow)?;
            train_s = t.elapsed().as_secs_f64();
            f
        }
        _ => FlowParams::bypass(
            fit_codec(&bulk_keys, cfg.flow.theta, cfg.flow.dims).map_err(FlowError::from)?,
            cfg.flow.layers,
            cfg.flow.hidden,
        ),
    };

    let reads = workload.ops().filter(|o| o.is_read()).count();
    let ops = workload.op_count();
    let warm: Vec<Op> = workload
        .bulk
        .iter()
        .take(ops.div_ceil(100))
        .map(|p| Op::Lookup(p.0))
        .collect();

    let mut reports = Vec::with_capacity(cfg.repeat);
    for _ in 0..cfg.repeat {
        let (mut engine, transform_s, build_s, use_flow, tail_after) = match cfg.engine {
            EngineKind::Nfl => {
                let config = NflConfig {
                    index: cfg.index,
                    flow_mode: cfg.flow_mode,
                    ..NflConfig::default()
                };
                let idx = NflIndex::bulkload(&workload.bulk, flow.clone(), config)?;
                let t = idx.timings();
                let after = idx.decision().map_or(tail_before, |d| d.tail_after);
                let use_flow = idx.use_flow();
                (Engine::Nfl(Box::new(idx)), t.transform_s, t.build_s, use_flow, after)
            }
            EngineKind::Afli => {
                let t = Instant::now();
                let idx = Index::bulkload(&workload.bulk, cfg.index)?;
                let build = t.elapsed().as_secs_f64();
                (Engine::Afli(Box::new(idx)), 0.0, build, false, tail_before)
            }
            EngineKind::Oracle => {
                let t = Instant::now();
                let map = RefMap::bulkload(&workload.bulk)?;
                let build = t.elapsed().as_secs_f64();
                (Engine::Oracle(map), 0.0, build, false, tail_before)
            }
        };
        let mut reference = if cfg.verify {
            Some(RefMap::bulkload(&workload.bulk)?)
        } else {
            None
        };

        for chunk in warm.chunks(cfg.workload.batch_size) {
            let mut b = RequestBatch::new(chunk.to_vec());
            engine.execute(&mut b);
        }

        let mut samples = Vec::with_capacity(workload.batches.len());
        let mut mismatches = 0;
        let mut batch = RequestBatch::default();
        let mut check = RequestBatch::default();
        for template in &workload.batches {
            batch.ops.clone_from(&template.ops);
            let t = Instant::now();
            engine.execute(&mut batch);
            let nanos = t.elapsed().as_nanos() as u64;
            samples.push(BatchSample {
                nanos,
                ops: batch.ops.len(),
            });
            if let Some(r) = reference.as_mut() {
                check.ops.clone_from(&template.ops);
                r.execute(&mut check);
                mismatches += batch.results.iter().zip(&check.results).filter(|(a, b)| a != b).count();
            }
        }
        let total_ns: u64 = samples.iter().map(|s| s.nanos).sum();
        reports.push(BenchReport {
            engine: cfg.engine,
            workload: cfg.workload.mix,
            dataset: cfg.dataset.clone(),
            n: keys.len(),
            ops,
            reads,
            inserts: ops - reads,
            flow_mode: cfg.flow_mode,
            use_flow,
            throughput_mops: if total_ns == 0 {
                0.0
            } else {
                ops as f64 / total_ns as f64 * 1e3
            },
            p99_ns: batch_percentile(&samples, P99),
            p9999_ns: batch_percentile(&samples, P9999),
            max_ns: max_per_op(&samples),
            bulk_transform_s: transform_s,
            bulk_build_s: build_s,
            train_s,
            index_bytes: engine.size_bytes(),
            tail_before,
            tail_after,
            seed: cfg.workload.seed,
            mismatches,
            samples,
        });
    }
    Ok(reports)
}

/// Field-wise mean of repeated runs; samples are concatenated.
pub fn mean_report(reports: &[BenchReport]) -> Option<BenchReport> {
    let first = reports.first()?;
    let k = reports.len() as f64;
    let mean = |f: fn(&BenchReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
    Some(BenchReport {
        throughput_mops: mean(|r| r.throughput_mops),
        p99_ns: mean(|r| r.p99_ns),
        p9999_ns: mean(|r| r.p9999_ns),
        max_ns: mean(|r| r.max_ns),
        bulk_transform_s: mean(|r| r.bulk_transform_s),
        bulk_build_s: mean(|r| r.bulk_build_s),
        index_bytes: mean(|r| r.index_bytes as f64).round() as usize,
        mismatches: reports.iter().map(|r| r.mismatches).sum(),
        samples: reports.iter().flat_map(|r| r.samples.iter().copied()).collect(),
        ..first.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workloads::{gen_dataset, DatasetKind, DatasetSpec};

    fn s(nanos: u64, ops: usize) -> BatchSample {
        BatchSample { nanos, ops }
    }

    #[test]
    fn nearest_rank_rule() {
        let samples: Vec<BatchSample> = (1..=200).rev().map(|i| s(i * 100, 10)).collect();
        // rank ceil(0.99 * 200) = 198 -> 19_800 ns / 10 ops
        assert_eq!(batch_percentile(&samples, P99), 1980.0);
        assert_eq!(batch_percentile(&samples, P9999), 2000.0);
        assert_eq!(batch_percentile(&samples, 0), 10.0);
        assert_eq!(max_per_op(&samples), 2000.0);
        assert_eq!(batch_percentile(&[], P99), 0.0);
        assert_eq!(batch_percentile(&[s(7, 2)], P99), 3.5);
    }

    #[test]
    fn verified_runs_agree_with_reference() {
        let keys = gen_dataset(&DatasetSpec {
            kind: DatasetKind::Lognormal,
            n: 20_000,
            seed: 1,
        })
        .unwrap();
        for engine in [EngineKind::Nfl, EngineKind::Afli, EngineKind::Oracle] {
            let cfg = BenchConfig {
                engine,
                workload: WorkloadSpec {
                    mix: Mix::WriteHeavy,
                    op_count: 4096,
                    ..WorkloadSpec::default()
                },
                repeat: 2,
                verify: true,
                ..BenchConfig::default()
            };
            let reports = run_bench(&keys, None, &cfg).unwrap();
            assert_eq!(reports.len(), 2);
            for r in &reports {
                assert_eq!(r.mismatches, 0, "{engine}");
                assert_eq!(r.ops, 4096);
                assert_eq!(r.inserts, 4096 - 4096 * 20 / 100);
                assert_eq!(r.samples.len(), 16);
                assert!(r.p99_ns <= r.p9999_ns && r.p9999_ns <= r.max_ns);
            }
            let m = mean_report(&reports).unwrap();
            assert_eq!(m.samples.len(), 32);
        }
    }

    #[test]
    fn read_only_reports_no_inserts() {
        let keys: Vec<f64> = (0..5000).map(|i| i as f64).collect();
        let cfg = BenchConfig {
            engine: EngineKind::Afli,
            workload: WorkloadSpec {
                mix: Mix::ReadOnly,
                op_count: 1000,
                ..WorkloadSpec::default()
            },
            repeat: 1,
            ..BenchConfig::default()
        };
        let r = &run_bench(&keys, None, &cfg).unwrap()[0];
        assert_eq!((r.reads, r.inserts), (1000, 0));
    }
}
