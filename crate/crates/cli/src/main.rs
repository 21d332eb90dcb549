//! `nfl` command-line harness: generate key files, train flows, run
//! benchmarks and inspect conflict statistics.

mod report;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nfl::conflict::{conflict_degrees, fit_scaled_ranks, switch_decision, tail_conflict_degree, DEFAULT_GAMMA};
use nfl::harness::{mean_report, run_bench, BenchConfig, EngineKind};
use nfl::numflow::{mean_log_likelihood, transform_keys_batched, DEFAULT_BATCH};
use nfl::workloads::{gen_dataset, read_keys, write_keys, DatasetKind, DatasetSpec, HeaderMode, Mix, WorkloadSpec};
use nfl::{load_flow_file, save_flow_file, train_flow, FlowConfig, FlowMode, FlowParams, Index, IndexConfig};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "nfl", version, about = "Learned index over flow-transformed keys")]
struct Cli {
    /// Seed used by any subcommand whose own seed is not given.
    #[arg(long, global = true, env = "NFL_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a sorted, unique key file.
    Gen(GenArgs),
    /// Train a flow on a key file and save it.
    TrainFlow(TrainArgs),
    /// Bulk-load, then time a seeded operation stream.
    Bench(BenchArgs),
    /// Print conflict statistics, flow latency and index stats.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Dist {
    Lognormal,
    Longlat,
    Uniform,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Header {
    #[default]
    Auto,
    Present,
    Absent,
}

impl From<Header> for HeaderMode {
    fn from(h: Header) -> Self {
        match h {
            Header::Auto => HeaderMode::Auto,
            Header::Present => HeaderMode::Present,
            Header::Absent => HeaderMode::Absent,
        }
    }
}

#[derive(Args)]
struct KeysArg {
    /// Binary key file.
    #[arg(long)]
    keys: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    header: Header,
}

impl KeysArg {
    fn load(&self) -> Result<Vec<f64>> {
        read_keys(&self.keys, self.header.into()).with_context(|| format!("reading {}", self.keys.display()))
    }

    fn dataset_name(&self) -> String {
        self.keys
            .file_stem()
            .map_or_else(|| "file".into(), |s| s.to_string_lossy().into_owned())
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    dist: Dist,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "keys.bin")]
    out: PathBuf,
    /// Lower bound for `uniform`.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    lo: f64,
    /// Upper bound (exclusive) for `uniform`.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    hi: f64,
    /// Write the raw keys without the count header.
    #[arg(long)]
    no_header: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    keys: KeysArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    sample_frac: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    keys: KeysArg,
    /// Trained flow; one is trained on the bulk keys when absent.
    #[arg(long)]
    flow_file: Option<PathBuf>,
    #[arg(long, default_value = "read-heavy")]
    workload: Mix,
    #[arg(long, default_value_t = 0.5)]
    bulk_frac: f64,
    #[arg(long, default_value_t = 100_000)]
    ops: usize,
    #[arg(long, default_value_t = nfl::workloads::DEFAULT_ZIPF_S)]
    zipf: f64,
    #[arg(long, default_value_t = DEFAULT_BATCH)]
    batch: usize,
    #[arg(long, default_value = "auto")]
    flow: FlowMode,
    #[arg(long, default_value = "nfl")]
    engine: EngineKind,
    #[arg(long, default_value_t = 5)]
    repeat: usize,
    /// Replay every batch on a reference map; exit nonzero on any mismatch.
    #[arg(long)]
    verify: bool,
    /// CSV output, one row per run.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[command(flatten)]
    keys: KeysArg,
    #[arg(long)]
    flow_file: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    /// Timing repetitions per batch size in the latency sweep.
    #[arg(long, default_value_t = 5)]
    rounds: usize,
    /// Bulk-load an index and print its stats.
    #[arg(long)]
    bulkload: bool,
    /// CSV output with columns section,space,x,value.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Command::Gen(a) => cmd_gen(a, cli.seed),
        Command::TrainFlow(a) => cmd_train_flow(a, cli.seed),
        Command::Bench(a) => cmd_bench(a, cli.seed),
        Command::Inspect(a) => cmd_inspect(a, cli.seed),
    }
}

fn cmd_gen(a: GenArgs, seed: Option<u64>) -> Result<()> {
    let kind = match a.dist {
        Dist::Lognormal => DatasetKind::Lognormal,
        Dist::Longlat => DatasetKind::Longlat,
        Dist::Uniform => DatasetKind::Uniform { lo: a.lo, hi: a.hi },
    };
    let keys = gen_dataset(&DatasetSpec {
        kind,
        n: a.n,
        seed: seed.unwrap_or(42),
    })?;
    write_keys(&a.out, &keys, !a.no_header)?;
    println!(
        "wrote {} keys to {} (span [{}, {}])",
        keys.len(),
        a.out.display(),
        keys[0],
        keys[keys.len() - 1]
    );
    Ok(())
}

fn cmd_train_flow(a: TrainArgs, seed: Option<u64>) -> Result<()> {
    let keys = a.keys.load()?;
    let d = FlowConfig::default();
    let config = FlowConfig {
        sample_fraction: a.sample_frac.unwrap_or(d.sample_fraction),
        epochs: a.epochs.unwrap_or(d.epochs),
        batch_size: a.batch.unwrap_or(d.batch_size),
        learning_rate: a.lr.unwrap_or(d.learning_rate),
        seed: seed.unwrap_or(d.seed),
        dims: a.dims.unwrap_or(d.dims),
        layers: a.layers.unwrap_or(d.layers),
        hidden: a.hidden.unwrap_or(d.hidden),
        ..d
    };
    let init = train_flow(&keys, &FlowConfig { epochs: 0, ..config })?;
    let t = Instant::now();
    let flow = train_flow(&keys, &config)?;
    let train_s = t.elapsed().as_secs_f64();
    save_flow_file(&flow, &a.out)?;

    let ll_init = mean_log_likelihood(&keys, &init);
    let ll_final = mean_log_likelihood(&keys, &flow);
    let z = transform_keys_batched(&keys, &flow, DEFAULT_BATCH);
    let ic = IndexConfig::default();
    let dec = switch_decision(&keys, &z, ic.alpha, ic.gamma)?;
    println!("trained on {} keys in {train_s:.3} s", keys.len());
    println!("mean log-likelihood: initial {ll_init:.6} final {ll_final:.6}");
    println!(
        "tail conflict: before {} after {} (injective {}, use_flow {})",
        dec.tail_before, dec.tail_after, dec.injective, dec.use_flow
    );
    println!("saved flow to {}", a.out.display());
    Ok(())
}

fn cmd_bench(a: BenchArgs, seed: Option<u64>) -> Result<()> {
    let keys = a.keys.load()?;
    let flow = a.flow_file.as_ref().map(load_flow_file).transpose()?;
    let cfg = BenchConfig {
        engine: a.engine,
        flow_mode: a.flow,
        workload: WorkloadSpec {
            mix: a.workload,
            bulk_fraction: a.bulk_frac,
            op_count: a.ops,
            zipf_s: a.zipf,
            batch_size: a.batch,
            seed: seed.unwrap_or(42),
        },
        repeat: a.repeat,
        verify: a.verify,
        dataset: a.keys.dataset_name(),
        ..BenchConfig::default()
    };
    let runs = run_bench(&keys, flow.as_ref(), &cfg)?;
    if let Some(path) = &a.report {
        report::write_csv(path, &runs)?;
    }
    let mean = mean_report(&runs).expect("repeat >= 1");
    report::print_table(&mean, runs.len());
    if a.verify {
        if mean.mismatches > 0 {
            bail!("{} operation results differ from the reference map", mean.mismatches);
        }
        println!("verify: all results match the reference map");
    }
    Ok(())
}

fn cmd_inspect(a: InspectArgs, seed: Option<u64>) -> Result<()> {
    let keys = a.keys.load()?;
    let ic = IndexConfig {
        gamma: a.gamma,
        ..IndexConfig::default()
    };
    ic.validate()?;
    let flow: FlowParams = match &a.flow_file {
        Some(p) => load_flow_file(p)?,
        None => train_flow(
            &keys,
            &FlowConfig {
                seed: seed.unwrap_or(FlowConfig::default().seed),
                ..FlowConfig::default()
            },
        )?,
    };
    let mut rows = Vec::new();

    let z = transform_keys_batched(&keys, &flow, DEFAULT_BATCH);
    let mut z_sorted = z.clone();
    z_sorted.sort_by(f64::total_cmp);
    println!("{} keys, span [{}, {}]", keys.len(), keys[0], keys[keys.len() - 1]);
    for (space, ks) in [("original", &keys), ("transformed", &z_sorted)] {
        let hist = conflict_degrees(ks, &fit_scaled_ranks(ks, ic.alpha));
        let tail = tail_conflict_degree(&hist, ic.gamma)?;
        println!(
            "{space}: {} occupied positions, max degree {}, tail degree {tail} (gamma {})",
            hist.occupied(),
            hist.max_degree(),
            ic.gamma
        );
        let counts = hist.degree_counts();
        let shown: Vec<String> = counts.iter().take(8).map(|(d, c)| format!("{d}:{c}")).collect();
        println!("  degree:positions {}{}", shown.join(" "), if counts.len() > 8 { " ..." } else { "" });
        for (d, c) in &counts {
            rows.push(report::InspectRow::new("histogram", space, *d as f64, *c as f64));
        }
        rows.push(report::InspectRow::new("tail", space, ic.gamma, tail as f64));
    }

    println!("flow transform latency (ns per key):");
    let probe: Vec<f64> = keys.iter().copied().cycle().take(keys.len().max(1 << 16)).collect();
    let mut out = vec![0.0; probe.len()];
    for batch in [1usize, 8, 32, 128, 256, 1024, 2048] {
        let mut best = f64::INFINITY;
        for _ in 0..a.rounds.max(1) {
            let t = Instant::now();
            for (k, o) in probe.chunks(batch).zip(out.chunks_mut(batch)) {
                flow.transform_batch(k, o);
            }
            best = best.min(t.elapsed().as_nanos() as f64 / probe.len() as f64);
        }
        std::hint::black_box(&out);
        println!("  batch {batch:>5}: {best:8.2}");
        rows.push(report::InspectRow::new("latency", "flow", batch as f64, best));
    }

    if a.bulkload {
        let pairs: Vec<(f64, u64)> = keys.iter().enumerate().map(|(i, &k)| (k, i as u64)).collect();
        let t = Instant::now();
        let index = Index::bulkload(&pairs, ic)?;
        let s = index.stats();
        println!(
            "index: built in {:.3} s, {} model nodes, {} dense nodes, {} buckets, max height {}, avg height {:.3}, {} bytes",
            t.elapsed().as_secs_f64(),
            s.model_nodes,
            s.dense_nodes,
            s.buckets,
            s.max_height,
            s.avg_height,
            s.size_bytes
        );
    }
    if let Some(path) = &a.csv {
        report::write_inspect_csv(path, &rows)?;
    }
    Ok(())
}
