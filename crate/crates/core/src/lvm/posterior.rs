use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::gaussian;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", bound(deserialize = "T: Real"))]
pub enum Covariance<T> {
    /// variances
    Diagonal(Vec<T>),
    Full(Matrix<T>),
}

/// `q(z|x) = N(mean, cov)`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct GaussianPosterior<T> {
    pub mean: Vec<T>,
    pub cov: Covariance<T>,
}

impl<T: Real> GaussianPosterior<T> {
    pub fn new(mean: Vec<T>, cov: Covariance<T>) -> Result<Self> {
        let q = Self { mean, cov };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.mean.len();
        match &self.cov {
            Covariance::Diagonal(v) => {
                if v.len() != d {
                    return Err(Error::invalid("diagonal covariance length differs from the mean"));
                }
                if v.iter().any(|&x| !(x > T::zero()) || !x.is_finite()) {
                    return Err(Error::numerical("posterior variances must be positive and finite"));
                }
            }
            Covariance::Full(m) => {
                if m.shape() != (d, d) {
                    return Err(Error::invalid("full covariance shape differs from the mean"));
                }
                m.cholesky()?;
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn cov_matrix(&self) -> Matrix<T> {
        match &self.cov {
            Covariance::Diagonal(v) => Matrix::from_diag(v),
            Covariance::Full(m) => m.clone(),
        }
    }

    /// Lower-triangular `L` with `L Lᵀ = cov`.
    pub fn scale_factor(&self) -> Result<Matrix<T>> {
        match &self.cov {
            Covariance::Diagonal(v) => Ok(Matrix::from_diag(&v.iter().map(|x| x.sqrt()).collect::<Vec<_>>())),
            Covariance::Full(m) => m.cholesky(),
        }
    }

    /// `z = mean + L ε`
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<Vec<T>> {
        let l = self.scale_factor()?;
        let eps: Vec<T> = (0..self.dim()).map(|_| gaussian(rng)).collect();
        Ok(self.mean.iter().zip(l.mul_vec(&eps)).map(|(&m, e)| m + e).collect())
    }

    /// `KL(q ‖ N(0, I))` in closed form.
    pub fn kl_to_standard_normal(&self) -> Result<T> {
        let d = T::lit(self.dim() as f64);
        let (trace, log_det) = match &self.cov {
            Covariance::Diagonal(v) => {
                self.validate()?;
                (v.iter().copied().sum::<T>(), v.iter().map(|x| x.ln()).sum::<T>())
            }
            Covariance::Full(m) => (m.trace(), m.log_det_spd()?),
        };
        Ok(T::lit(0.5) * (trace + dot(&self.mean, &self.mean) - d - log_det))
    }

    /// `log N(z; mean, cov)`
    pub fn log_density(&self, z: &[T]) -> Result<T> {
        let l = self.scale_factor()?;
        // solve L w = z - mean
        let d = self.dim();
        let mut w = vec![T::zero(); d];
        for i in 0..d {
            let mut s = z[i] - self.mean[i];
            for k in 0..i {
                s -= l[(i, k)] * w[k];
            }
            w[i] = s / l[(i, i)];
        }
        let log_det: T = l.diag().iter().map(|x| x.ln()).sum::<T>() * T::lit(2.0);
        Ok(-T::lit(0.5) * (dot(&w, &w) + log_det + T::lit(d as f64) * crate::scalar::ln_2pi::<T>()))
    }
}
