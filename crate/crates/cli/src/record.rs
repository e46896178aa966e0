//! Run records, long-format metric tables and the file manifest.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, ExperimentConfig, ExperimentKind};
use crate::error::{CliError, Result};

pub const RECORD_FILE: &str = "runrecord.json";
pub const METRICS_TABLE: &str = "metrics/per_seed.csv";

/// One measured value. `x` is the swept coordinate where there is one (β, axis, stage epoch).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub seed: u64,
    pub variant: String,
    pub x: Option<f64>,
    pub metric: String,
    pub value: f64,
}

impl MetricRow {
    pub fn new(seed: u64, variant: &str, x: Option<f64>, metric: &str, value: f64) -> Self {
        Self { seed, variant: variant.into(), x, metric: metric.into(), value }
    }
}

/// Cross-seed summary of one `(variant, x, metric)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub variant: String,
    pub x: Option<f64>,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    /// sample standard deviation, 0 for a single seed
    pub spread: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub metrics: Vec<MetricRow>,
    /// artifacts produced by this seed, relative to the run directory
    pub files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: ExperimentKind,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedRecord>,
    pub aggregates: Vec<Aggregate>,
    /// statistics computed across seeds from the metric table
    pub derived: BTreeMap<String, f64>,
    /// relative path ↦ SHA-256 of every file except the record itself
    pub manifest: BTreeMap<String, String>,
}

impl RunRecord {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("run record serializes");
        s.push('\n');
        s
    }

    /// SHA-256 of the serialized record.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn fmt_x(x: Option<f64>) -> String {
    x.map(|v| format!("{v:?}")).unwrap_or_default()
}

pub fn rows_to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("seed,variant,x,metric,value\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{:?}\n", r.seed, r.variant, fmt_x(r.x), r.metric, r.value));
    }
    out
}

pub fn rows_from_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut lines = text.lines();
    if lines.next() != Some("seed,variant,x,metric,value") {
        return Err(CliError::CorruptRun("metric table has an unexpected header".into()));
    }
    let bad = |k: usize| CliError::CorruptRun(format!("metric table line {} is malformed", k + 2));
    lines
        .enumerate()
        .map(|(k, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad(k));
            }
            let x = if f[2].is_empty() { None } else { Some(f[2].parse().map_err(|_| bad(k))?) };
            Ok(MetricRow {
                seed: f[0].parse().map_err(|_| bad(k))?,
                variant: f[1].into(),
                x,
                metric: f[3].into(),
                value: f[4].parse().map_err(|_| bad(k))?,
            })
        })
        .collect()
}

/// Groups rows by `(variant, x, metric)` in first-appearance order.
pub fn aggregate(rows: &[MetricRow]) -> Vec<Aggregate> {
    let mut order: Vec<(String, Option<u64>, String)> = Vec::new();
    let mut groups: BTreeMap<(String, Option<u64>, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let key = (r.variant.clone(), r.x.map(f64::to_bits), r.metric.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r.value);
    }
    order
        .into_iter()
        .map(|key| {
            let v = &groups[&key];
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let spread = if n > 1 { (v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
            Aggregate {
                variant: key.0,
                x: key.1.map(f64::from_bits),
                metric: key.2,
                n,
                mean,
                spread,
                min: v.iter().copied().fold(f64::INFINITY, f64::min),
                max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

pub fn aggregates_to_csv(aggs: &[Aggregate]) -> String {
    let mut out = String::from("variant,x,metric,n,mean,spread,min,max\n");
    for a in aggs {
        out.push_str(&format!(
            "{},{},{},{},{:?},{:?},{:?},{:?}\n",
            a.variant,
            fmt_x(a.x),
            a.metric,
            a.n,
            a.mean,
            a.spread,
            a.min,
            a.max
        ));
    }
    out
}

/// Writes `bytes` under `dir`, creating parent directories.
pub fn write_file(dir: &Path, rel: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
}
