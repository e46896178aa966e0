//! Summaries of finished runs, rebuilt from the persisted files only.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, Result};
use crate::experiments::derive;
use crate::record::{aggregate, aggregates_to_csv, rows_from_csv, sha256_hex, write_file, RunRecord, METRICS_TABLE, RECORD_FILE};

pub const SUMMARY_FILE: &str = "summary.md";
pub const PLOT_TABLE: &str = "plots/aggregates.csv";

fn corrupt(msg: impl Into<String>) -> CliError {
    CliError::CorruptRun(msg.into())
}

fn read(dir: &Path, rel: &str) -> Result<Vec<u8>> {
    std::fs::read(dir.join(rel)).map_err(|e| corrupt(format!("{rel}: {e}")))
}

/// Loads the record and checks every manifest entry against the files on disk.
pub fn verify(dir: &Path) -> Result<RunRecord> {
    let bytes = read(dir, RECORD_FILE)?;
    let record: RunRecord = serde_json::from_slice(&bytes).map_err(|e| corrupt(format!("{RECORD_FILE}: {e}")))?;
    if !record.manifest.contains_key(METRICS_TABLE) {
        return Err(corrupt(format!("manifest lacks {METRICS_TABLE}")));
    }
    for seed in &record.seeds {
        if let Some(f) = seed.files.iter().find(|f| !record.manifest.contains_key(*f)) {
            return Err(corrupt(format!("seed {} lists {f}, which is not in the manifest", seed.seed)));
        }
    }
    for (rel, digest) in &record.manifest {
        if sha256_hex(&read(dir, rel)?) != *digest {
            return Err(corrupt(format!("{rel} does not match its manifest digest")));
        }
    }
    Ok(record)
}

fn fmt(v: f64) -> String {
    format!("{v:.4e}")
}

fn fmt_x(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_else(|| "-".into())
}

/// Verifies the run in `dir`, recomputes every statistic from its metric table and writes
/// `summary.md` plus plot-ready aggregates. Returns the summary text.
pub fn report(dir: &Path) -> Result<String> {
    let record = verify(dir)?;
    let table = String::from_utf8(read(dir, METRICS_TABLE)?).map_err(|_| corrupt("metric table is not UTF-8"))?;
    let rows = rows_from_csv(&table)?;
    let aggregates = aggregate(&rows);
    let derived = derive(record.experiment, &rows);
    if aggregates != record.aggregates || derived != record.derived {
        return Err(corrupt("run record disagrees with the persisted metric table"));
    }

    let mut s = String::new();
    let _ = writeln!(s, "# {} run\n", record.experiment.name());
    let _ = writeln!(s, "config hash: `{}`", record.config_hash);
    let seeds: Vec<String> = record.seeds.iter().map(|r| r.seed.to_string()).collect();
    let _ = writeln!(s, "seeds: {}\n", seeds.join(", "));

    let _ = writeln!(s, "## Aggregates over seeds\n");
    let _ = writeln!(s, "| variant | x | metric | n | mean | spread | min | max |");
    let _ = writeln!(s, "|---|---|---|---|---|---|---|---|");
    for a in &aggregates {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            a.variant,
            fmt_x(a.x),
            a.metric,
            a.n,
            fmt(a.mean),
            fmt(a.spread),
            fmt(a.min),
            fmt(a.max)
        );
    }
    if !derived.is_empty() {
        let _ = writeln!(s, "\n## Cross-seed statistics\n");
        let _ = writeln!(s, "| statistic | value |");
        let _ = writeln!(s, "|---|---|");
        for (k, v) in &derived {
            let _ = writeln!(s, "| {k} | {} |", fmt(*v));
        }
    }
    let _ = writeln!(s, "\n## Per seed\n");
    let _ = writeln!(s, "| seed | variant | x | metric | value |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    for r in &rows {
        let _ = writeln!(s, "| {} | {} | {} | {} | {} |", r.seed, r.variant, fmt_x(r.x), r.metric, fmt(r.value));
    }
    let _ = writeln!(s, "\n## Plot data\n");
    let _ = writeln!(s, "- `{PLOT_TABLE}`: aggregates as CSV");
    for (prefix, what) in [
        ("metrics/mi_", "mutual-information heatmap (latents × factors, greedily ordered)"),
        ("metrics/epochs_", "per-epoch training log"),
        ("traces/", "path trace"),
        ("models/", "model"),
    ] {
        for rel in record.manifest.keys().filter(|k| k.starts_with(prefix)) {
            let _ = writeln!(s, "- `{rel}`: {what}");
        }
    }

    write_file(dir, PLOT_TABLE, aggregates_to_csv(&aggregates).as_bytes())?;
    write_file(dir, SUMMARY_FILE, s.as_bytes())?;
    Ok(s)
}
