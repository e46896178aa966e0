//! Linear and nonlinear Gaussian latent variable models.

mod posterior;
mod ppca;
mod schedule;
mod vae;

pub use posterior::{Covariance, GaussianPosterior};
pub use ppca::{ppca_closed_form, ppca_em_step, ppca_posterior, PpcaSolution};
pub use schedule::BetaSchedule;
pub use vae::{
    elbo, elbo_gradient, train_gaussian_vae, CovHead, ElboTerms, EpochLog, ModelGrads, TrainOptions, TrainedModel,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovMode {
    Diagonal,
    Full,
}

impl CovMode {
    /// Number of covariance parameters for a `d`-dimensional posterior.
    pub fn n_params(self, d: usize) -> usize {
        match self {
            CovMode::Diagonal => d,
            CovMode::Full => d * (d + 1) / 2,
        }
    }
}

/// Model configuration. The prior is always the standard normal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LvmConfig {
    pub d: usize,
    pub m: usize,
    pub sigma2: f64,
    pub beta: BetaSchedule,
    pub cov_mode: CovMode,
}

impl LvmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > self.m {
            return Err(Error::invalid(format!("need 0 < d <= m, got d={} m={}", self.d, self.m)));
        }
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(Error::invalid("sigma2 must be positive"));
        }
        self.beta.validate()
    }
}
