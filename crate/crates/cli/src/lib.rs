//! Experiment runner for seamlab: executes one of five named experiments from a JSON
//! config, persists metric tables, path traces and models, and summarises finished runs.

pub mod config;
pub mod error;
pub mod experiments;
pub mod record;
pub mod report;

use std::path::Path;

pub use config::{load_config, parse_config, ExperimentConfig, ExperimentKind};
pub use error::{CliError, Result};
pub use record::{MetricRow, RunRecord};
pub use report::report;

use record::{aggregate, rows_to_csv, sha256_hex, write_file, SeedRecord, METRICS_TABLE, RECORD_FILE};

/// Runs the configured experiment for every seed and writes the run directory,
/// resolving a relative `output_dir` against `base`.
pub fn run_config(config: &ExperimentConfig, base: &Path) -> Result<RunRecord> {
    config.validate()?;
    let outputs = experiments::run_all(config)?;
    let dir = &config.run_dir(base);
    let mut manifest = std::collections::BTreeMap::new();
    let mut seeds = Vec::new();
    let mut rows = Vec::new();
    for (&seed, out) in config.seeds.iter().zip(outputs) {
        let mut files = Vec::new();
        for (rel, bytes) in &out.files {
            write_file(dir, rel, bytes)?;
            manifest.insert(rel.clone(), sha256_hex(bytes));
            files.push(rel.clone());
        }
        rows.extend(out.rows.iter().cloned());
        seeds.push(SeedRecord { seed, metrics: out.rows, files });
    }
    let table = rows_to_csv(&rows);
    write_file(dir, METRICS_TABLE, table.as_bytes())?;
    manifest.insert(METRICS_TABLE.to_string(), sha256_hex(table.as_bytes()));

    let record = RunRecord {
        experiment: config.experiment,
        config_hash: config.hash(),
        config: config.clone(),
        seeds,
        aggregates: aggregate(&rows),
        derived: experiments::derive(config.experiment, &rows),
        manifest,
    };
    write_file(dir, RECORD_FILE, record.to_json().as_bytes())?;
    Ok(record)
}

/// Loads the config at `path` and runs it relative to the file's directory.
pub fn run(path: &Path) -> Result<RunRecord> {
    run_config(&load_config(path)?, path.parent().unwrap_or(Path::new("")))
}
