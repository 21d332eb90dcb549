use anyhow::Result;
use nfl::harness::BenchReport;
use std::path::Path;

pub const BENCH_COLUMNS: [&str; 17] = [
    "engine",
    "workload",
    "dataset",
    "n",
    "ops",
    "flow_mode",
    "use_flow",
    "throughput_mops",
    "p99_ns",
    "p9999_ns",
    "max_ns",
    "bulk_transform_s",
    "bulk_build_s",
    "index_bytes",
    "tail_before",
    "tail_after",
    "seed",
];

pub const INSPECT_COLUMNS: [&str; 4] = ["section", "space", "x", "value"];

pub fn write_csv(path: &Path, runs: &[BenchReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(BENCH_COLUMNS)?;
    for r in runs {
        w.write_record([
            r.engine.to_string(),
            r.workload.to_string(),
            r.dataset.clone(),
            r.n.to_string(),
            r.ops.to_string(),
            r.flow_mode.to_string(),
            r.use_flow.to_string(),
            r.throughput_mops.to_string(),
            r.p99_ns.to_string(),
            r.p9999_ns.to_string(),
            r.max_ns.to_string(),
            r.bulk_transform_s.to_string(),
            r.bulk_build_s.to_string(),
            r.index_bytes.to_string(),
            r.tail_before.to_string(),
            r.tail_after.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub struct InspectRow {
    section: &'static str,
    space: &'static str,
    x: f64,
    value: f64,
}

impl InspectRow {
    pub fn new(section: &'static str, space: &'static str, x: f64, value: f64) -> Self {
        Self { section, space, x, value }
    }
}

pub fn write_inspect_csv(path: &Path, rows: &[InspectRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(INSPECT_COLUMNS)?;
    for r in rows {
        w.write_record([r.section, r.space, &r.x.to_string(), &r.value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn print_table(m: &BenchReport, runs: usize) {
    println!("{} / {} / {} (mean of {runs})", m.engine, m.workload, m.dataset);
    println!("  keys {:>12}   ops {:>10} (reads {}, inserts {})", m.n, m.ops, m.reads, m.inserts);
    println!("  flow {:>12}   use_flow {}", m.flow_mode, m.use_flow);
    println!("  throughput      {:>10.3} Mops/s", m.throughput_mops);
    println!("  p99             {:>10.1} ns/op", m.p99_ns);
    println!("  p99.99          {:>10.1} ns/op", m.p9999_ns);
    println!("  max             {:>10.1} ns/op", m.max_ns);
    println!(
        "  bulk load       {:>10.4} s transform + {:.4} s build",
        m.bulk_transform_s, m.bulk_build_s
    );
    println!("  index size      {:>10} bytes", m.index_bytes);
    println!("  tail conflict   {:>10} -> {}", m.tail_before, m.tail_after);
}
