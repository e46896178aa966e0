use serde::{Deserialize, Serialize};

use crate::datagen::{gaussian_vec, rng};
use crate::error::{Error, Result};
use crate::geometry::{jacobian_svd, require_regular, Generator};
use crate::linalg::{bottleneck_signed_permutation_distance, continuous_svd_step, signed_permutation_distance, sub_vec, Matrix, SvdTriple, DEFAULT_GAP_TOL};
use crate::lvm::GaussianPosterior;
use crate::scalar::Real;

pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// The two expectation terms of the posterior precision identity and their combination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct OaPrecision<T> {
    /// `I + jtj_part - hess_part`
    pub precision: Matrix<T>,
    /// `E[JᵀJ] / (βσ²)`
    pub jtj_part: Matrix<T>,
    /// `E[Σ_l r_l ∇² g_l] / (βσ²)` with `r = x - g(z)`
    pub hess_part: Matrix<T>,
}

/// Monte Carlo estimate over `z ~ q` of the optimal-posterior precision for `x`.
pub fn oa_precision<T: Real, G: Generator<T> + ?Sized>(
    decoder: &G,
    x: &[T],
    q: &GaussianPosterior<T>,
    sigma2: T,
    beta: T,
    n_mc: usize,
    seed: u64,
) -> Result<OaPrecision<T>> {
    if n_mc == 0 {
        return Err(Error::invalid("n_mc must be at least 1"));
    }
    if q.dim() != decoder.latent_dim() || x.len() != decoder.output_dim() {
        return Err(Error::invalid("posterior or input dimension does not match the decoder"));
    }
    let d = q.dim();
    let l = q.scale_factor()?;
    let mut rng = rng(seed);
    let mut jtj = Matrix::zeros(d, d);
    let mut hess = Matrix::zeros(d, d);
    for _ in 0..n_mc {
        let e: Vec<T> = gaussian_vec(&mut rng, d);
        let z: Vec<T> = q.mean.iter().zip(l.mul_vec(&e)).map(|(&m, v)| m + v).collect();
        jtj.axpy(T::one(), &decoder.jacobian(&z)?.gram());
        let r = sub_vec(x, &decoder.value(&z)?);
        hess.axpy(T::one(), &decoder.directed_hessian(&z, &r)?);
    }
    let scale = (beta * sigma2 * T::lit(n_mc as f64)).recip();
    let jtj_part = jtj.scale(scale);
    let hess_part = hess.scale(scale);
    let mut precision = jtj_part.sub(&hess_part);
    for i in 0..d {
        precision[(i, i)] += T::one();
    }
    Ok(OaPrecision { precision, jtj_part, hess_part })
}

/// Mean off-diagonal entry of `D^{-1/2} |m| D^{-1/2}` with `D = diag |m|`.
pub fn offdiag_score<T: Real>(m: &Matrix<T>) -> Result<T> {
    if !m.is_square() || m.rows() == 0 {
        return Err(Error::invalid("offdiag_score needs a non-empty square matrix"));
    }
    let d = m.rows();
    if let Some(i) = (0..d).find(|&i| !(m[(i, i)] > T::zero())) {
        return Err(Error::invalid(format!("diagonal entry {i} is not strictly positive")));
    }
    if d == 1 {
        return Ok(T::zero());
    }
    let inv_sqrt: Vec<T> = (0..d).map(|i| m[(i, i)].sqrt().recip()).collect();
    let mut sum = T::zero();
    for i in 0..d {
        for j in 0..d {
            if i != j {
                sum += m[(i, j)].abs() * inv_sqrt[i] * inv_sqrt[j];
            }
        }
    }
    Ok(sum / T::lit((d * (d - 1)) as f64))
}

/// Max-abs distance from the Jacobian's right singular vectors to the nearest signed permutation.
pub fn c1_score<T: Real, G: Generator<T> + ?Sized>(decoder: &G, z: &[T]) -> Result<T> {
    require_regular(decoder, z, T::lit(DEFAULT_GAP_TOL))?;
    Ok(bottleneck_signed_permutation_distance(&jacobian_svd(decoder, z)?.v).0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct C2Score<T> {
    /// `matrix[(i, j)] = ∂s_i/∂z_j`
    pub matrix: Matrix<T>,
    pub offdiag_mass: T,
    pub omega_mass: T,
}

/// Finite-difference derivatives of continuity-matched singular values and left
/// singular vectors; central differences at `fd_step` and `2·fd_step` are combined
/// by Richardson extrapolation. Row `i` of the matrix belongs to the singular value
/// whose right singular vector is matched to latent axis `i` at `z`.
pub fn c2_score<T: Real, G: Generator<T> + ?Sized>(decoder: &G, z: &[T], fd_step: T) -> Result<C2Score<T>> {
    if !(fd_step > T::zero()) {
        return Err(Error::invalid("fd_step must be positive"));
    }
    let gap_tol = T::lit(DEFAULT_GAP_TOL);
    require_regular(decoder, z, gap_tol)?;
    let base = jacobian_svd(decoder, z)?;
    let d = base.dim();
    let m = base.u.rows();
    let (_, axes, _) = signed_permutation_distance(&base.v.transpose());
    let at = |j: usize, h: T| -> Result<SvdTriple<T>> {
        let mut zz = z.to_vec();
        zz[j] += h;
        require_regular(decoder, &zz, gap_tol)?;
        continuous_svd_step(&base, &decoder.jacobian(&zz)?, gap_tol).map_err(|e| match e {
            Error::DegenerateSpectrum(msg) => Error::invalid(format!("stencil leaves the regular set: {msg}")),
            other => other,
        })
    };
    let mut matrix = Matrix::zeros(d, d);
    let mut omega_sum = T::zero();
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    for j in 0..d {
        let p1 = at(j, fd_step)?;
        let m1 = at(j, -fd_step)?;
        let p2 = at(j, two * fd_step)?;
        let m2 = at(j, -two * fd_step)?;
        let rich = |a1: T, b1: T, a2: T, b2: T| {
            let d1 = (a1 - b1) / (two * fd_step);
            let d2 = (a2 - b2) / (T::lit(4.0) * fd_step);
            (T::lit(4.0) * d1 - d2) / three
        };
        for i in 0..d {
            matrix[(axes[i], j)] = rich(p1.s[i], m1.s[i], p2.s[i], m2.s[i]);
        }
        let du = Matrix::from_fn(m, d, |r, c| rich(p1.u[(r, c)], m1.u[(r, c)], p2.u[(r, c)], m2.u[(r, c)]));
        let omega = base.u.tr_matmul(&du);
        omega_sum += omega.as_slice().iter().map(|v| v.abs()).sum::<T>();
    }
    let offdiag_mass = if d > 1 {
        let mut s = T::zero();
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    s += matrix[(i, j)].abs();
                }
            }
        }
        s / T::lit((d * (d - 1)) as f64)
    } else {
        T::zero()
    };
    let omega_mass = omega_sum / T::lit((d * d * d) as f64);
    Ok(C2Score { matrix, offdiag_mass, omega_mass })
}

/// An input and the posterior used to evaluate a decoder around it.
#[derive(Clone, Debug)]
pub struct Probe<T> {
    pub x: Vec<T>,
    pub q: GaussianPosterior<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointScores {
    pub z: Vec<f64>,
    pub jtj_offdiag: f64,
    /// `None` when the Hessian term has a zero diagonal entry but is not identically zero
    pub hess_term_offdiag: Option<f64>,
    /// `None` outside the regular set
    pub c1_distance: Option<f64>,
    pub c2_offdiag: Option<f64>,
    pub omega_mass: Option<f64>,
}

/// Scores averaged over probes; per-point values are kept alongside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub jtj_offdiag: f64,
    pub hess_term_offdiag: f64,
    pub c1_distance: f64,
    pub c2_offdiag: f64,
    pub omega_mass: f64,
    /// posterior means the pointwise scores were evaluated at
    pub evaluation_points: Vec<Vec<f64>>,
    pub points: Vec<PointScores>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> f64 {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Evaluates every constraint score at each probe: the precision terms under `q`,
/// and C1/C2 pointwise at the posterior mean.
pub fn constraint_report<T: Real, G: Generator<T> + ?Sized>(
    decoder: &G,
    probes: &[Probe<T>],
    sigma2: T,
    beta: T,
    n_mc: usize,
    seed: u64,
    fd_step: T,
) -> Result<ConstraintReport> {
    if probes.is_empty() {
        return Err(Error::invalid("constraint_report needs at least one probe"));
    }
    let mut points = Vec::with_capacity(probes.len());
    for (k, p) in probes.iter().enumerate() {
        let oa = oa_precision(decoder, &p.x, &p.q, sigma2, beta, n_mc, seed.wrapping_add(k as u64))?;
        let jtj_offdiag = offdiag_score(&oa.jtj_part)?.to_f64_lossy();
        let hess = oa.hess_part.abs();
        let hess_term_offdiag = if hess.max_abs() == T::zero() {
            Some(0.0)
        } else {
            offdiag_score(&hess).ok().map(|v| v.to_f64_lossy())
        };
        let z = &p.q.mean;
        let c1_distance = c1_score(decoder, z).ok().map(|v| v.to_f64_lossy());
        let c2 = c2_score(decoder, z, fd_step).ok();
        points.push(PointScores {
            z: z.iter().map(|v| v.to_f64_lossy()).collect(),
            jtj_offdiag,
            hess_term_offdiag,
            c1_distance,
            c2_offdiag: c2.as_ref().map(|c| c.offdiag_mass.to_f64_lossy()),
            omega_mass: c2.as_ref().map(|c| c.omega_mass.to_f64_lossy()),
        });
    }
    Ok(ConstraintReport {
        jtj_offdiag: mean_of(points.iter().map(|p| Some(p.jtj_offdiag))),
        hess_term_offdiag: mean_of(points.iter().map(|p| p.hess_term_offdiag)),
        c1_distance: mean_of(points.iter().map(|p| p.c1_distance)),
        c2_offdiag: mean_of(points.iter().map(|p| p.c2_offdiag)),
        omega_mass: mean_of(points.iter().map(|p| p.omega_mass)),
        evaluation_points: points.iter().map(|p| p.z.clone()).collect(),
        points,
    })
}
