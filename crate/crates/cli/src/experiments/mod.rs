//! The five experiments. Each maps one seed to metric rows and in-memory artifacts;
//! the runner writes artifacts in seed order so output does not depend on scheduling.

use std::collections::BTreeMap;

use seamlab::lvm::EpochLog;
use seamlab::metrics::spearman;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{CliError, Result};
use crate::record::MetricRow;

mod anneal;
mod ident;
mod linear;
mod seams;
mod sweep;
mod toy;

pub use linear::aligned_column_residual;

#[derive(Clone, Debug, Default)]
pub struct SeedOutput {
    pub rows: Vec<MetricRow>,
    /// relative path and contents
    pub files: Vec<(String, Vec<u8>)>,
}

impl SeedOutput {
    fn row(&mut self, seed: u64, variant: &str, x: Option<f64>, metric: &str, value: f64) {
        self.rows.push(MetricRow::new(seed, variant, x, metric, value));
    }

    fn file(&mut self, path: String, contents: impl Into<Vec<u8>>) {
        self.files.push((path, contents.into()));
    }

    fn json<S: serde::Serialize>(&mut self, path: String, value: &S) {
        let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
        s.push('\n');
        self.file(path, s);
    }
}

/// Derives an independent stream seed from a run seed and a tag.
pub(crate) fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-epoch training log, optionally with one extra named column.
pub(crate) fn epochs_csv(log: &[EpochLog], extra: Option<(&str, &[f64])>) -> String {
    let mut out = String::from("epoch,beta,recon,kl,elbo");
    if let Some((name, _)) = extra {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (k, e) in log.iter().enumerate() {
        out.push_str(&format!("{},{:?},{:?},{:?},{:?}", e.epoch, e.beta, e.recon, e.kl, e.elbo));
        if let Some((_, v)) = extra {
            out.push_str(&format!(",{:?}", v[k]));
        }
        out.push('\n');
    }
    out
}

pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedOutput> {
    match config.experiment {
        ExperimentKind::LinearSymmetry => linear::run(&config.linear_symmetry, seed),
        ExperimentKind::BetaSweep => sweep::run(&config.beta_sweep, seed),
        ExperimentKind::SeamGeometry => seams::run(&config.seam_geometry, seed),
        ExperimentKind::BetaAnneal => anneal::run(&config.beta_anneal, seed),
        ExperimentKind::Identifiability => ident::run(&config.identifiability, seed),
    }
}

/// Runs every seed on its own thread; results come back in seed-list order.
pub fn run_all(config: &ExperimentConfig) -> Result<Vec<SeedOutput>> {
    let results: Vec<Result<SeedOutput>> = std::thread::scope(|scope| {
        let handles: Vec<_> = config.seeds.iter().map(|&seed| scope.spawn(move || run_seed(config, seed))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(CliError::Config("experiment thread panicked".into()))))
            .collect()
    });
    results.into_iter().collect()
}

fn values<'a>(rows: &'a [MetricRow], variant: &'a str, metric: &'a str) -> impl Iterator<Item = &'a MetricRow> {
    rows.iter().filter(move |r| r.variant == variant && r.metric == metric)
}

fn mean<'a>(rows: impl Iterator<Item = &'a MetricRow>) -> f64 {
    let (sum, n) = rows.fold((0.0, 0usize), |(s, n), r| (s + r.value, n + 1));
    sum / n as f64
}

/// Cross-seed statistics that depend on more than one table cell.
pub fn derive(kind: ExperimentKind, rows: &[MetricRow]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    let mut variants: Vec<&str> = rows.iter().map(|r| r.variant.as_str()).collect();
    variants.sort_unstable();
    variants.dedup();
    match kind {
        ExperimentKind::BetaSweep => {
            for v in variants {
                for (metric, sign, name) in [("aas", 1.0, "aas"), ("mig", 1.0, "mig"), ("jtj_offdiag", -1.0, "neg_jtj_offdiag")] {
                    let (betas, vals): (Vec<f64>, Vec<f64>) =
                        values(rows, v, metric).filter_map(|r| r.x.map(|b| (b, sign * r.value))).unzip();
                    if let Ok(rho) = spearman(&betas, &vals) {
                        out.insert(format!("{v}.spearman_beta_{name}"), rho);
                    }
                }
            }
        }
        ExperimentKind::LinearSymmetry => {
            for v in variants {
                let c1: Vec<f64> = values(rows, v, "c1").map(|r| r.value).collect();
                if c1.is_empty() {
                    continue;
                }
                out.insert(format!("{v}.seeds_c1_above_0.1"), c1.iter().filter(|&&c| c > 0.1).count() as f64);
            }
        }
        ExperimentKind::BetaAnneal => {
            out.insert("pattern.holds_fraction".into(), mean(values(rows, "pattern", "holds")));
        }
        ExperimentKind::SeamGeometry => {
            out.insert("summary.separated_fraction".into(), mean(values(rows, "summary", "separated")));
        }
        ExperimentKind::Identifiability => {
            let worst = |m: &str| values(rows, "compare", m).map(|r| r.value).fold(0.0, f64::max);
            out.insert("compare.worst_residual".into(), worst("residual"));
            out.insert("compare.worst_factor_deviation".into(), worst("max_factor_deviation"));
        }
    }
    out
}
