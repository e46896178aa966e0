//! Experiment configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use seamlab::datagen::{MonotoneMap, ToyFactorSpec};
use seamlab::lvm::CovMode;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    LinearSymmetry,
    BetaSweep,
    SeamGeometry,
    BetaAnneal,
    Identifiability,
}

impl ExperimentKind {
    pub const ALL: [&'static str; 5] = ["linear-symmetry", "beta-sweep", "seam-geometry", "beta-anneal", "identifiability"];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::LinearSymmetry => "linear-symmetry",
            ExperimentKind::BetaSweep => "beta-sweep",
            ExperimentKind::SeamGeometry => "seam-geometry",
            ExperimentKind::BetaAnneal => "beta-anneal",
            ExperimentKind::Identifiability => "identifiability",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seeds: Vec<u64>,
    /// relative paths are taken from the config file's directory
    pub output_dir: PathBuf,
    #[serde(default)]
    pub linear_symmetry: LinearSymmetryConfig,
    #[serde(default)]
    pub beta_sweep: BetaSweepConfig,
    #[serde(default)]
    pub seam_geometry: SeamGeometryConfig,
    #[serde(default)]
    pub beta_anneal: BetaAnnealConfig,
    #[serde(default)]
    pub identifiability: IdentifiabilityConfig,
}

/// One stage of optimisation; stages run back to back on the same model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    #[serde(default = "one")]
    pub n_mc: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearSymmetryConfig {
    pub m: usize,
    pub d: usize,
    pub n: usize,
    pub sigma2: f64,
    /// column norms of the ground-truth loading matrix
    pub loadings: Vec<f64>,
    pub cov_modes: Vec<CovMode>,
    pub momentum: f64,
    pub grad_clip: Option<f64>,
    pub phases: Vec<Phase>,
}

impl Default for LinearSymmetryConfig {
    fn default() -> Self {
        Self {
            m: 8,
            d: 3,
            n: 20_000,
            sigma2: 0.25,
            loadings: vec![3.0, 2.0, 1.0],
            cov_modes: vec![CovMode::Diagonal, CovMode::Full],
            momentum: 0.9,
            grad_clip: Some(100.0),
            phases: vec![
                Phase { epochs: 20, lr: 0.01, batch_size: 200, n_mc: 1 },
                Phase { epochs: 20, lr: 0.003, batch_size: 1000, n_mc: 4 },
                Phase { epochs: 20, lr: 0.001, batch_size: 2000, n_mc: 8 },
            ],
        }
    }
}

/// Nonlinear VAE trained on rendered toy-factor images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyVaeConfig {
    pub toy: ToyFactorSpec,
    pub d: usize,
    pub hidden: usize,
    pub sigma2: f64,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub grad_clip: Option<f64>,
    /// equal-width bins per axis for the mutual-information estimate
    pub bins: usize,
    /// images used as constraint-score probes
    pub n_probes: usize,
    pub probe_n_mc: usize,
}

impl Default for ToyVaeConfig {
    fn default() -> Self {
        Self {
            toy: ToyFactorSpec { side: 16, x_levels: 10, y_levels: 10, scale_levels: 10, min_scale: 2.0, max_scale: 6.0 },
            d: 6,
            hidden: 64,
            sigma2: 0.1,
            epochs: 150,
            lr: 0.001,
            momentum: 0.9,
            batch_size: 64,
            grad_clip: Some(100.0),
            bins: 10,
            n_probes: 20,
            probe_n_mc: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BetaSweepConfig {
    pub model: ToyVaeConfig,
    pub betas: Vec<f64>,
    pub cov_modes: Vec<CovMode>,
}

impl Default for BetaSweepConfig {
    fn default() -> Self {
        Self { model: ToyVaeConfig::default(), betas: vec![0.25, 1.0, 4.0], cov_modes: vec![CovMode::Diagonal] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BetaAnnealConfig {
    pub model: ToyVaeConfig,
    pub beta_high: f64,
    pub beta_low: f64,
    /// fraction of training held at `beta_high` before the geometric decay starts
    pub hold_fraction: f64,
}

impl Default for BetaAnnealConfig {
    fn default() -> Self {
        Self { model: ToyVaeConfig::default(), beta_high: 1.0, beta_low: 0.001, hold_fraction: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeamGeometryConfig {
    pub m: usize,
    /// one value in [0, 1) per latent, selects each coordinate's derivative band
    pub jitter: Vec<f64>,
    pub half_span: f64,
    pub step: f64,
    /// standard deviation of the seeded start point
    pub start_scale: f64,
}

impl Default for SeamGeometryConfig {
    fn default() -> Self {
        Self { m: 6, jitter: vec![0.3, 0.6, 0.1], half_span: 1.0, step: 1e-2, start_scale: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifiabilityConfig {
    pub m: usize,
    /// derivative-band selectors of the first generator, one per latent
    pub jitter: Vec<f64>,
    /// axis-wise reparameterization of the second generator
    pub psi: Vec<MonotoneMap>,
    pub n_probes: usize,
    pub fd_step: f64,
}

impl Default for IdentifiabilityConfig {
    fn default() -> Self {
        Self {
            m: 6,
            jitter: vec![0.3, 0.6, 0.1],
            psi: vec![MonotoneMap::cubic(), MonotoneMap::TanhBump { slope: 1.0, bump: 0.3 }, MonotoneMap::TanhBump { slope: 1.0, bump: 0.5 }],
            n_probes: 8,
            fd_step: 1e-3,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_clip(clip: Option<f64>) -> Result<()> {
    clip.map_or(Ok(()), |c| check_positive("grad_clip", c))
}

fn check_phase(p: &Phase) -> Result<()> {
    check_positive("lr", p.lr)?;
    if p.epochs == 0 || p.batch_size == 0 || p.n_mc == 0 {
        return Err(invalid("phase epochs, batch_size and n_mc must be at least 1"));
    }
    Ok(())
}

impl ToyVaeConfig {
    fn validate(&self) -> Result<()> {
        self.toy.validate().map_err(|e| invalid(e.to_string()))?;
        check_positive("sigma2", self.sigma2)?;
        check_positive("lr", self.lr)?;
        check_clip(self.grad_clip)?;
        if self.d == 0 || self.hidden == 0 || self.epochs == 0 || self.batch_size == 0 || self.probe_n_mc == 0 {
            return Err(invalid("d, hidden, epochs, batch_size and probe_n_mc must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid("momentum must lie in [0, 1)"));
        }
        if self.n_probes == 0 || self.n_probes > self.toy.n_images() {
            return Err(invalid("n_probes must lie in 1..=number of images"));
        }
        if self.bins < 2 || self.toy.n_images() < 100 * self.bins {
            return Err(invalid(format!(
                "{} images are too few for {} MI bins (need 100 per bin)",
                self.toy.n_images(),
                self.bins
            )));
        }
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(invalid("seeds must be non-empty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(invalid("seeds must be distinct"));
        }
        match self.experiment {
            ExperimentKind::LinearSymmetry => {
                let c = &self.linear_symmetry;
                if c.d == 0 || c.d > c.m || c.n < 2 {
                    return Err(invalid("linear-symmetry needs 0 < d <= m and n >= 2"));
                }
                check_positive("sigma2", c.sigma2)?;
                if c.loadings.len() != c.d {
                    return Err(invalid("one loading per latent is required"));
                }
                let mut l = c.loadings.clone();
                l.sort_by(|a, b| b.total_cmp(a));
                if l.iter().any(|v| !(*v > 0.0)) || l.windows(2).any(|w| w[0] == w[1]) {
                    return Err(invalid("loadings must be positive and distinct"));
                }
                if c.cov_modes.is_empty() || c.phases.is_empty() {
                    return Err(invalid("cov_modes and phases must be non-empty"));
                }
                check_clip(c.grad_clip)?;
                if !(0.0..1.0).contains(&c.momentum) {
                    return Err(invalid("momentum must lie in [0, 1)"));
                }
                c.phases.iter().try_for_each(check_phase)
            }
            ExperimentKind::BetaSweep => {
                let c = &self.beta_sweep;
                c.model.validate()?;
                if c.betas.len() < 2 || c.cov_modes.is_empty() {
                    return Err(invalid("beta-sweep needs at least two betas and one cov mode"));
                }
                c.betas.iter().try_for_each(|&b| check_positive("beta", b))
            }
            ExperimentKind::BetaAnneal => {
                let c = &self.beta_anneal;
                c.model.validate()?;
                check_positive("beta_high", c.beta_high)?;
                check_positive("beta_low", c.beta_low)?;
                if c.beta_low >= c.beta_high {
                    return Err(invalid("beta_low must be below beta_high"));
                }
                if c.model.epochs < 3 {
                    return Err(invalid("beta-anneal needs at least 3 epochs"));
                }
                if !(0.0..1.0).contains(&c.hold_fraction) {
                    return Err(invalid("hold_fraction must lie in [0, 1)"));
                }
                Ok(())
            }
            ExperimentKind::SeamGeometry => {
                let c = &self.seam_geometry;
                let d = c.jitter.len();
                if d == 0 || d > c.m {
                    return Err(invalid("seam-geometry needs 0 < len(jitter) <= m"));
                }
                if c.jitter.iter().any(|j| !(0.0..1.0).contains(j)) {
                    return Err(invalid("jitter values must lie in [0, 1)"));
                }
                check_positive("half_span", c.half_span)?;
                check_positive("step", c.step)?;
                check_positive("start_scale", c.start_scale)
            }
            ExperimentKind::Identifiability => {
                let c = &self.identifiability;
                let d = c.jitter.len();
                if d == 0 || d > c.m || c.psi.len() != d || c.n_probes == 0 {
                    return Err(invalid("identifiability needs 0 < len(jitter) <= m, one psi map per latent and probes"));
                }
                if c.jitter.iter().any(|j| !(0.0..1.0).contains(j)) {
                    return Err(invalid("jitter values must lie in [0, 1)"));
                }
                for p in &c.psi {
                    p.validate().map_err(|e| invalid(e.to_string()))?;
                }
                check_positive("fd_step", c.fd_step)
            }
        }
    }

    /// `output_dir` resolved against `base`.
    pub fn run_dir(&self, base: &Path) -> PathBuf {
        base.join(&self.output_dir)
    }

    /// SHA-256 of the canonical JSON form (defaults filled in, keys sorted).
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(&serde_json::to_value(self).expect("config serializes")).expect("json value");
        hex(&Sha256::digest(canonical))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
    match value.get("experiment").and_then(|v| v.as_str()) {
        Some(name) if ExperimentKind::ALL.contains(&name) => {}
        Some(name) => {
            return Err(invalid(format!("unknown experiment '{name}' (expected one of {})", ExperimentKind::ALL.join(", "))))
        }
        None => return Err(invalid("missing string field 'experiment'")),
    }
    let config: ExperimentConfig = serde_json::from_value(value).map_err(|e| invalid(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text)
}
