use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FactorPrior, Generator, Provenance};
use crate::linalg::{signed_permutation_distance, Matrix};
use crate::scalar::Real;

use super::maps::MonotoneMap;

/// `g(z) = A·φ(z)` with orthonormal columns in `A` and coordinate-wise monotone `φ`.
///
/// `J = A·diag(φ'(z))`, so `U = A` (up to order and sign), `s^i = φ'_i(z_i)` and `V = I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct C1C2Generator<T> {
    pub a: Matrix<T>,
    pub phis: Vec<MonotoneMap>,
}

pub fn make_c1c2_generator<T: Real>(a: Matrix<T>, phis: Vec<MonotoneMap>) -> Result<C1C2Generator<T>> {
    if a.cols() != phis.len() {
        return Err(Error::invalid(format!("{} columns but {} maps", a.cols(), phis.len())));
    }
    if a.rows() < a.cols() {
        return Err(Error::invalid("A must be tall"));
    }
    let err = a.gram().max_abs_diff(&Matrix::identity(a.cols()));
    if err > T::lit(1e-10) {
        return Err(Error::invalid(format!("columns of A are not orthonormal (error {:e})", err.to_f64_lossy())));
    }
    for phi in &phis {
        phi.validate()?;
    }
    Ok(C1C2Generator { a, phis })
}

fn check_len<T>(z: &[T], d: usize) -> Result<()> {
    if z.len() != d {
        return Err(Error::invalid(format!("latent has length {}, expected {d}", z.len())));
    }
    Ok(())
}

impl<T: Real> Generator<T> for C1C2Generator<T> {
    fn latent_dim(&self) -> usize {
        self.a.cols()
    }

    fn output_dim(&self) -> usize {
        self.a.rows()
    }

    fn value(&self, z: &[T]) -> Result<Vec<T>> {
        check_len(z, self.latent_dim())?;
        let phi: Vec<T> = z.iter().zip(&self.phis).map(|(&zi, p)| p.value(zi)).collect();
        Ok(self.a.mul_vec(&phi))
    }

    fn jacobian(&self, z: &[T]) -> Result<Matrix<T>> {
        check_len(z, self.latent_dim())?;
        let dphi: Vec<T> = z.iter().zip(&self.phis).map(|(&zi, p)| p.deriv(zi)).collect();
        Ok(Matrix::from_fn(self.a.rows(), self.a.cols(), |i, j| self.a[(i, j)] * dphi[j]))
    }

    fn directed_hessian(&self, z: &[T], r: &[T]) -> Result<Matrix<T>> {
        check_len(z, self.latent_dim())?;
        check_len(r, self.output_dim())?;
        let ar = self.a.tr_mul_vec(r);
        let diag: Vec<T> = z.iter().zip(&self.phis).zip(&ar).map(|((&zi, p), &c)| c * p.second_deriv(zi)).collect();
        Ok(Matrix::from_diag(&diag))
    }

    fn provenance(&self) -> Provenance {
        Provenance::Analytic
    }
}

/// `h(z) = g(M z)` for an invertible latent map `M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "G: Deserialize<'de>, T: Real"))]
pub struct Precomposed<G, T> {
    pub inner: G,
    pub map: Matrix<T>,
}

impl<G, T: Real> Precomposed<G, T> {
    /// Any invertible square `map`; used for non-rotational (sheared) controls.
    pub fn new(inner: G, map: Matrix<T>) -> Result<Self>
    where
        G: Generator<T>,
    {
        if map.shape() != (inner.latent_dim(), inner.latent_dim()) {
            return Err(Error::invalid("latent map must be d×d"));
        }
        if map.det()?.abs() <= T::epsilon() {
            return Err(Error::invalid("latent map must be invertible"));
        }
        Ok(Self { inner, map })
    }
}

/// Entangled control `g ∘ R` for a proper rotation `R` that is not a signed permutation.
pub fn make_entangled_control<T: Real, G: Generator<T>>(g: G, r: Matrix<T>) -> Result<Precomposed<G, T>> {
    let d = g.latent_dim();
    if r.shape() != (d, d) {
        return Err(Error::invalid("rotation must be d×d"));
    }
    let tol = T::lit(1e-10);
    if r.gram().max_abs_diff(&Matrix::identity(d)) > tol {
        return Err(Error::invalid("R is not orthogonal"));
    }
    if (r.det()? - T::one()).abs() > tol {
        return Err(Error::invalid("R must have determinant +1"));
    }
    let (dist, _, _) = signed_permutation_distance(&r);
    if dist <= tol {
        return Err(Error::invalid("R is a signed permutation; the control would not be entangled"));
    }
    Ok(Precomposed { inner: g, map: r })
}

impl<T: Real, G: Generator<T>> Generator<T> for Precomposed<G, T> {
    fn latent_dim(&self) -> usize {
        self.map.cols()
    }

    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn value(&self, z: &[T]) -> Result<Vec<T>> {
        check_len(z, self.latent_dim())?;
        self.inner.value(&self.map.mul_vec(z))
    }

    fn jacobian(&self, z: &[T]) -> Result<Matrix<T>> {
        check_len(z, self.latent_dim())?;
        Ok(self.inner.jacobian(&self.map.mul_vec(z))?.matmul(&self.map))
    }

    fn directed_hessian(&self, z: &[T], r: &[T]) -> Result<Matrix<T>> {
        check_len(z, self.latent_dim())?;
        let h = self.inner.directed_hessian(&self.map.mul_vec(z), r)?;
        Ok(self.map.tr_matmul(&h.matmul(&self.map)))
    }

    fn provenance(&self) -> Provenance {
        self.inner.provenance()
    }
}

/// `h(z) = g(ψ(z))` for a coordinate-wise monotone reparameterization `ψ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reparameterized<G> {
    pub inner: G,
    pub psi: Vec<MonotoneMap>,
}

impl<G> Reparameterized<G> {
    pub fn new<T: Real>(inner: G, psi: Vec<MonotoneMap>) -> Result<Self>
    where
        G: Generator<T>,
    {
        if psi.len() != inner.latent_dim() {
            return Err(Error::invalid("one map per latent coordinate"));
        }
        for p in &psi {
            p.validate()?;
        }
        Ok(Self { inner, psi })
    }

    pub fn apply<T: Real>(&self, z: &[T]) -> Vec<T> {
        z.iter().zip(&self.psi).map(|(&zi, p)| p.value(zi)).collect()
    }
}

impl<T: Real, G: Generator<T>> Generator<T> for Reparameterized<G> {
    fn latent_dim(&self) -> usize {
        self.psi.len()
    }

    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn value(&self, z: &[T]) -> Result<Vec<T>> {
        check_len(z, self.latent_dim())?;
        self.inner.value(&self.apply(z))
    }

    fn jacobian(&self, z: &[T]) -> Result<Matrix<T>> {
        check_len(z, self.latent_dim())?;
        let j = self.inner.jacobian(&self.apply(z))?;
        let dpsi: Vec<T> = z.iter().zip(&self.psi).map(|(&zi, p)| p.deriv(zi)).collect();
        Ok(Matrix::from_fn(j.rows(), j.cols(), |a, b| j[(a, b)] * dpsi[b]))
    }

    fn directed_hessian(&self, z: &[T], r: &[T]) -> Result<Matrix<T>> {
        check_len(z, self.latent_dim())?;
        let w = self.apply(z);
        let h = self.inner.directed_hessian(&w, r)?;
        let grad = self.inner.jacobian(&w)?.tr_mul_vec(r);
        let dpsi: Vec<T> = z.iter().zip(&self.psi).map(|(&zi, p)| p.deriv(zi)).collect();
        let mut out = Matrix::from_fn(h.rows(), h.cols(), |a, b| dpsi[a] * h[(a, b)] * dpsi[b]);
        for (k, (&zk, p)) in z.iter().zip(&self.psi).enumerate() {
            out[(k, k)] += grad[k] * p.second_deriv(zk);
        }
        Ok(out)
    }

    fn provenance(&self) -> Provenance {
        self.inner.provenance()
    }
}

/// Prior of `z` such that `ψ(z)` follows `base`: `log p(z_i) = log p_base(ψ_i(z_i)) + log ψ_i'(z_i)`.
#[derive(Clone, Debug)]
pub struct PulledBackPrior<P> {
    pub base: P,
    pub psi: Vec<MonotoneMap>,
}

impl<T: Real, P: FactorPrior<T>> FactorPrior<T> for PulledBackPrior<P> {
    fn log_density(&self, i: usize, zi: T) -> T {
        let p = &self.psi[i];
        self.base.log_density(i, p.value(zi)) + p.deriv(zi).ln()
    }
}
