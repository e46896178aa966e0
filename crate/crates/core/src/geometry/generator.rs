use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::net::Net;
use crate::scalar::{ln_2pi, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Analytic,
    TrainedDecoder,
}

/// A generator `z ↦ x` with first and directed second derivatives.
pub trait Generator<T: Real>: Send + Sync {
    fn latent_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn value(&self, z: &[T]) -> Result<Vec<T>>;
    /// output × latent
    fn jacobian(&self, z: &[T]) -> Result<Matrix<T>>;
    /// `Σ_ℓ r_ℓ ∇²_z g_ℓ(z)` with `r` held constant.
    fn directed_hessian(&self, z: &[T], r: &[T]) -> Result<Matrix<T>>;
    fn provenance(&self) -> Provenance;
}

impl<T: Real, G: Generator<T> + ?Sized> Generator<T> for &G {
    fn latent_dim(&self) -> usize {
        (**self).latent_dim()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn value(&self, z: &[T]) -> Result<Vec<T>> {
        (**self).value(z)
    }
    fn jacobian(&self, z: &[T]) -> Result<Matrix<T>> {
        (**self).jacobian(z)
    }
    fn directed_hessian(&self, z: &[T], r: &[T]) -> Result<Matrix<T>> {
        (**self).directed_hessian(z, r)
    }
    fn provenance(&self) -> Provenance {
        (**self).provenance()
    }
}

impl<T: Real, G: Generator<T> + ?Sized> Generator<T> for Box<G> {
    fn latent_dim(&self) -> usize {
        (**self).latent_dim()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn value(&self, z: &[T]) -> Result<Vec<T>> {
        (**self).value(z)
    }
    fn jacobian(&self, z: &[T]) -> Result<Matrix<T>> {
        (**self).jacobian(z)
    }
    fn directed_hessian(&self, z: &[T], r: &[T]) -> Result<Matrix<T>> {
        (**self).directed_hessian(z, r)
    }
    fn provenance(&self) -> Provenance {
        (**self).provenance()
    }
}

impl<T: Real> Generator<T> for Net<T> {
    fn latent_dim(&self) -> usize {
        self.input_dim()
    }
    fn output_dim(&self) -> usize {
        Net::output_dim(self)
    }
    fn value(&self, z: &[T]) -> Result<Vec<T>> {
        self.forward(z)
    }
    fn jacobian(&self, z: &[T]) -> Result<Matrix<T>> {
        Net::jacobian(self, z)
    }
    fn directed_hessian(&self, z: &[T], r: &[T]) -> Result<Matrix<T>> {
        Net::directed_hessian(self, z, r)
    }
    fn provenance(&self) -> Provenance {
        Provenance::TrainedDecoder
    }
}

/// `x = D z`
#[derive(Clone, Debug)]
pub struct LinearGenerator<T> {
    pub d: Matrix<T>,
}

impl<T: Real> LinearGenerator<T> {
    pub fn new(d: Matrix<T>) -> Result<Self> {
        if d.rows() < d.cols() {
            return Err(Error::invalid("a linear generator needs at least as many outputs as latents"));
        }
        Ok(Self { d })
    }

    fn check(&self, z: &[T]) -> Result<()> {
        if z.len() != self.d.cols() {
            return Err(Error::invalid(format!("latent has length {}, expected {}", z.len(), self.d.cols())));
        }
        Ok(())
    }
}

impl<T: Real> Generator<T> for LinearGenerator<T> {
    fn latent_dim(&self) -> usize {
        self.d.cols()
    }
    fn output_dim(&self) -> usize {
        self.d.rows()
    }
    fn value(&self, z: &[T]) -> Result<Vec<T>> {
        self.check(z)?;
        Ok(self.d.mul_vec(z))
    }
    fn jacobian(&self, z: &[T]) -> Result<Matrix<T>> {
        self.check(z)?;
        Ok(self.d.clone())
    }
    fn directed_hessian(&self, z: &[T], r: &[T]) -> Result<Matrix<T>> {
        self.check(z)?;
        if r.len() != self.d.rows() {
            return Err(Error::invalid("direction length differs from the output dimension"));
        }
        Ok(Matrix::zeros(self.d.cols(), self.d.cols()))
    }
    fn provenance(&self) -> Provenance {
        Provenance::Analytic
    }
}

/// Factorised latent prior `p(z) = Π_i p_i(z_i)`.
pub trait FactorPrior<T: Real>: Send + Sync {
    fn log_density(&self, i: usize, zi: T) -> T;

    fn log_joint(&self, z: &[T]) -> T {
        z.iter().enumerate().map(|(i, &zi)| self.log_density(i, zi)).sum()
    }
}

/// `N(0, I)`
#[derive(Clone, Copy, Debug, Default)]
pub struct StandardNormal;

impl<T: Real> FactorPrior<T> for StandardNormal {
    fn log_density(&self, _i: usize, zi: T) -> T {
        -T::lit(0.5) * (zi * zi + ln_2pi::<T>())
    }
}
