//! Jacobi SVD and symmetric eigendecomposition with deterministic ordering
//! and sign conventions, plus continuity-preserving SVD tracking.

use serde::{Deserialize, Serialize};

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default relative separation required between consecutive singular values.
pub const DEFAULT_GAP_TOL: f64 = 1e-6;

const MAX_SWEEPS: usize = 80;

/// Thin SVD `m = u · diag(s) · vᵀ` with `u` of shape m×d and `v` of shape d×d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct SvdTriple<T> {
    pub u: Matrix<T>,
    pub s: Vec<T>,
    pub v: Matrix<T>,
}

impl<T: Real> SvdTriple<T> {
    pub fn reconstruct(&self) -> Matrix<T> {
        let us = Matrix::from_fn(self.u.rows(), self.u.cols(), |i, j| self.u[(i, j)] * self.s[j]);
        us.matmul(&self.v.transpose())
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    /// Smallest gap between consecutive singular values, relative to the largest.
    pub fn min_relative_gap(&self) -> T {
        let smax = self.s.first().copied().unwrap_or_else(T::zero);
        if smax <= T::zero() {
            return T::zero();
        }
        self.s
            .windows(2)
            .map(|w| (w[0] - w[1]).abs() / smax)
            .fold(T::infinity(), T::min)
    }
}

/// Index of the first entry of largest magnitude.
fn dominant_index<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (k, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = k;
        }
    }
    best
}

/// Flips `(u^i, v^i)` pairs so that the dominant entry of each `v^i` is positive.
fn canonicalize_signs<T: Real>(u: &mut Matrix<T>, v: &mut Matrix<T>) {
    for j in 0..v.cols() {
        let col = v.col(j);
        if col[dominant_index(&col)] < T::zero() {
            for i in 0..v.rows() {
                v[(i, j)] = -v[(i, j)];
            }
            for i in 0..u.rows() {
                u[(i, j)] = -u[(i, j)];
            }
        }
    }
}

/// Descending order, ties resolved by lower original index.
fn descending_order<T: Real>(values: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    idx
}

/// Thin SVD by one-sided (Hestenes) Jacobi rotations.
///
/// Requires `rows >= cols`. Singular values are returned non-increasing and each
/// right singular vector has its largest-magnitude entry positive.
pub fn svd<T: Real>(m: &Matrix<T>) -> Result<SvdTriple<T>> {
    let (rows, cols) = m.shape();
    if rows < cols {
        return Err(Error::invalid(format!("svd needs rows >= cols, got {rows}x{cols}")));
    }
    if !m.is_finite() {
        return Err(Error::invalid("svd of a non-finite matrix"));
    }
    // column-major working copies
    let mut a: Vec<Vec<T>> = (0..cols).map(|j| m.col(j)).collect();
    let mut v: Vec<Vec<T>> =
        (0..cols).map(|j| (0..cols).map(|i| if i == j { T::one() } else { T::zero() }).collect()).collect();
    let eps = T::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut a, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<T> = a.iter().map(|c| dot(c, c).sqrt()).collect();
    let order = descending_order(&norms);
    let smax = norms[order.first().copied().unwrap_or(0)];
    let tiny = smax * eps * T::lit(rows as f64);

    let mut u = Matrix::zeros(rows, cols);
    let mut vm = Matrix::zeros(cols, cols);
    let mut s = Vec::with_capacity(cols);
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        s.push(norms[j]);
        vm.set_col(k, &v[j]);
        if norms[j] > tiny && norms[j] > T::zero() {
            let inv = T::one() / norms[j];
            let col: Vec<T> = a[j].iter().map(|&x| x * inv).collect();
            u.set_col(k, &col);
        } else {
            missing.push(k);
        }
    }
    for k in missing {
        let col = orthonormal_complement(&u, k);
        u.set_col(k, &col);
    }
    canonicalize_signs(&mut u, &mut vm);
    Ok(SvdTriple { u, s, v: vm })
}

fn rotate_pair<T: Real>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Unit vector orthogonal to every column of `u` except column `skip` (and later ones,
/// which are assumed zero).
fn orthonormal_complement<T: Real>(u: &Matrix<T>, skip: usize) -> Vec<T> {
    let rows = u.rows();
    let basis: Vec<Vec<T>> = (0..u.cols())
        .filter(|&j| j != skip)
        .map(|j| u.col(j))
        .filter(|c| dot(c, c) > T::zero())
        .collect();
    let mut best: Option<(T, Vec<T>)> = None;
    for e in 0..rows {
        let mut w: Vec<T> = (0..rows).map(|i| if i == e { T::one() } else { T::zero() }).collect();
        for _ in 0..2 {
            for b in &basis {
                let p = dot(&w, b);
                for (wi, &bi) in w.iter_mut().zip(b) {
                    *wi -= p * bi;
                }
            }
        }
        let n = dot(&w, &w).sqrt();
        if best.as_ref().map_or(true, |(bn, _)| n > *bn) {
            best = Some((n, w));
        }
    }
    let (n, w) = best.expect("non-empty basis search");
    w.into_iter().map(|x| x / n).collect()
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// The input is symmetrized first. Eigenvalues come back in descending order and
/// eigenvector columns follow the same sign canon as [`svd`].
pub fn sym_eig<T: Real>(m: &Matrix<T>) -> Result<(Vec<T>, Matrix<T>)> {
    if !m.is_square() {
        return Err(Error::invalid(format!("sym_eig needs a square matrix, got {:?}", m.shape())));
    }
    if !m.is_finite() {
        return Err(Error::invalid("sym_eig of a non-finite matrix"));
    }
    let n = m.rows();
    let mut a = m.symmetrize();
    let mut v = Matrix::identity(n);
    let eps = T::epsilon();

    for _ in 0..MAX_SWEEPS {
        let off: T = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|ij| a[ij] * a[ij]).sum();
        let total: T = a.as_slice().iter().map(|&x| x * x).sum();
        if off <= eps * eps * total || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                let t = if theta.is_infinite() {
                    T::zero()
                } else {
                    let sgn = if theta >= T::zero() { T::one() } else { -T::one() };
                    sgn / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                if t == T::zero() {
                    a[(p, q)] = T::zero();
                    a[(q, p)] = T::zero();
                    continue;
                }
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                // A <- Jᵀ A J with J the (p, q) rotation
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let diag = a.diag();
    let order = descending_order(&diag);
    let vals: Vec<T> = order.iter().map(|&j| diag[j]).collect();
    let mut vecs = Matrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        vecs.set_col(k, &v.col(j));
    }
    let mut dummy = Matrix::zeros(0, n);
    canonicalize_signs(&mut dummy, &mut vecs);
    Ok((vals, vecs))
}

/// SVD of `m` with columns reordered and re-signed to follow `prev` continuously.
///
/// Column `i` of the result is the fresh singular triple whose right vector has the
/// largest `|⟨v^i_prev, ·⟩|` among those not yet taken, signed so that the inner
/// product is positive. Fails with `DegenerateSpectrum` when two singular values of
/// `m` are within `gap_tol · s_max` of each other.
pub fn continuous_svd_step<T: Real>(prev: &SvdTriple<T>, m: &Matrix<T>, gap_tol: T) -> Result<SvdTriple<T>> {
    if m.shape() != (prev.u.rows(), prev.v.rows()) {
        return Err(Error::invalid("continuous_svd_step: shape differs from the previous triple"));
    }
    if *m == prev.reconstruct() {
        return Ok(prev.clone());
    }
    let fresh = svd(m)?;
    let smax = fresh.s[0];
    for (k, w) in fresh.s.windows(2).enumerate() {
        if w[0] - w[1] <= gap_tol * smax {
            return Err(Error::DegenerateSpectrum(format!(
                "singular values {k} and {} are within {:e} of each other",
                k + 1,
                (gap_tol * smax).to_f64_lossy()
            )));
        }
    }
    let d = fresh.dim();
    let mut taken = vec![false; d];
    let mut out = SvdTriple { u: Matrix::zeros(m.rows(), d), s: vec![T::zero(); d], v: Matrix::zeros(d, d) };
    for i in 0..d {
        let prev_v = prev.v.col(i);
        let mut best: Option<(usize, T)> = None;
        for (j, _) in taken.iter().enumerate().filter(|(_, &t)| !t) {
            let ip = dot(&prev_v, &fresh.v.col(j));
            if best.map_or(true, |(_, b)| ip.abs() > b.abs()) {
                best = Some((j, ip));
            }
        }
        let (j, ip) = best.expect("an untaken column exists");
        if ip == T::zero() {
            return Err(Error::DegenerateSpectrum(format!("right singular vector {i} lost track")));
        }
        taken[j] = true;
        let sign = if ip > T::zero() { T::one() } else { -T::one() };
        out.s[i] = fresh.s[j];
        out.v.set_col(i, &fresh.v.col(j).iter().map(|&x| sign * x).collect::<Vec<_>>());
        out.u.set_col(i, &fresh.u.col(j).iter().map(|&x| sign * x).collect::<Vec<_>>());
    }
    Ok(out)
}
