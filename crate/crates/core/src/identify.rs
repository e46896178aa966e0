//! Permutation-and-sign alignment, intrinsic seams from the on-manifold Hessian of
//! the push-forward log-density, and comparison of two seam decompositions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{jacobian_svd, manifold_density, regular_check, FactorPrior, Generator};
use crate::linalg::{max_weight_assignment, norm, signed_permutation_distance, sub_vec, sym_eig, Matrix, DEFAULT_GAP_TOL};
use crate::metrics::{c1_score, c2_score, DEFAULT_FD_STEP};
use crate::scalar::Real;

/// Tolerance for the orthonormality precondition of [`align_ps`].
pub const ORTHONORMAL_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignmentMethod {
    /// Hungarian assignment on `|cos|` between direction columns
    HungarianCosine,
    /// latent axes matched through aligned left singular vectors
    SeamDecomposition,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointAlignment {
    pub z: Vec<f64>,
    pub residual: f64,
    /// `log(p_i/s^i)` of the first parameterization minus that of the matched second one, per latent
    pub factor_log_ratios: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    /// `permutation[i]` is the index in the second system matched to `i`
    pub permutation: Vec<usize>,
    pub signs: Vec<i8>,
    pub residual: f64,
    pub method: AlignmentMethod,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<PointAlignment>,
}

fn check_orthonormal<T: Real>(m: &Matrix<T>, name: &str) -> Result<()> {
    let dev = m.gram().max_abs_diff(&Matrix::identity(m.cols()));
    if dev.to_f64_lossy() > ORTHONORMAL_TOL {
        return Err(Error::invalid(format!("{name} columns are not orthonormal (deviation {:e})", dev.to_f64_lossy())));
    }
    Ok(())
}

/// Matches columns of `learned` to columns of `truth` up to permutation and sign.
pub fn align_ps<T: Real>(learned: &Matrix<T>, truth: &Matrix<T>) -> Result<AlignmentResult> {
    if learned.shape() != truth.shape() {
        return Err(Error::invalid(format!("shape mismatch: {:?} vs {:?}", learned.shape(), truth.shape())));
    }
    check_orthonormal(learned, "learned")?;
    check_orthonormal(truth, "truth")?;
    let c = learned.tr_matmul(truth);
    let permutation = max_weight_assignment(&c.abs());
    let signs = permutation.iter().enumerate().map(|(i, &j)| if c[(i, j)] < T::zero() { -1 } else { 1 }).collect();
    let residual = permutation
        .iter()
        .enumerate()
        .map(|(i, &j)| (T::one() - c[(i, j)].abs()).max(T::zero()).to_f64_lossy())
        .fold(0.0, f64::max);
    Ok(AlignmentResult { permutation, signs, residual, method: AlignmentMethod::HungarianCosine, points: Vec::new() })
}

/// `log p_μ(g(z))` requiring only full column rank; repeated singular values are allowed
/// since the density does not depend on the choice of tangent basis.
fn log_pushforward_density<T: Real, G: Generator<T> + ?Sized, P: FactorPrior<T> + ?Sized>(
    g: &G,
    z: &[T],
    prior: &P,
) -> Result<T> {
    let diag = regular_check(g, z, T::lit(DEFAULT_GAP_TOL));
    if !(diag.min_sv > T::lit(DEFAULT_GAP_TOL)) {
        return Err(Error::invalid(format!(
            "stencil point has a rank-deficient Jacobian (min relative singular value {:e})",
            diag.min_sv.to_f64_lossy()
        )));
    }
    let log_det = g.jacobian(z)?.gram().log_det_spd()?;
    Ok(prior.log_joint(z) - T::lit(0.5) * log_det)
}

/// Hessian of `log p_μ` in the tangent basis `U_z` at `g(z)`, by second differences
/// of latent steps along `v^i / s^i` (unit steps along `u^i` to first order).
pub fn tangent_hessian<T: Real, G: Generator<T> + ?Sized, P: FactorPrior<T> + ?Sized>(
    g: &G,
    prior: &P,
    z: &[T],
    fd_step: T,
) -> Result<Matrix<T>> {
    if !(fd_step > T::zero()) {
        return Err(Error::invalid("fd_step must be positive"));
    }
    let t = jacobian_svd(g, z)?;
    let d = t.dim();
    let dirs: Vec<Vec<T>> = (0..d).map(|i| t.v.col(i).into_iter().map(|v| v / t.s[i]).collect()).collect();
    let f = |a: &[(usize, T)]| -> Result<T> {
        let mut zz = z.to_vec();
        for &(i, ai) in a {
            for (k, w) in zz.iter_mut().enumerate() {
                *w += ai * dirs[i][k];
            }
        }
        log_pushforward_density(g, &zz, prior)
    };
    let h = fd_step;
    let f0 = f(&[])?;
    let mut out = Matrix::zeros(d, d);
    for i in 0..d {
        out[(i, i)] = (f(&[(i, h)])? - T::lit(2.0) * f0 + f(&[(i, -h)])?) / (h * h);
        for j in 0..i {
            let v = (f(&[(i, h), (j, h)])? - f(&[(i, h), (j, -h)])? - f(&[(i, -h), (j, h)])? + f(&[(i, -h), (j, -h)])?)
                / (T::lit(4.0) * h * h);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Eigenvectors of the tangent Hessian mapped into ambient space through `U_z`
/// (`m × d`, one direction per column, ordered by decreasing eigenvalue).
pub fn intrinsic_seams<T: Real, G: Generator<T> + ?Sized, P: FactorPrior<T> + ?Sized>(
    g: &G,
    prior: &P,
    z: &[T],
    fd_step: T,
) -> Result<Matrix<T>> {
    let hess = tangent_hessian(g, prior, z, fd_step)?;
    let (values, vectors) = sym_eig(&hess)?;
    let scale = values.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let tol = T::lit(DEFAULT_GAP_TOL) * scale;
    for (k, w) in values.windows(2).enumerate() {
        if w[0] - w[1] <= tol {
            return Err(Error::DegenerateSpectrum(format!(
                "tangent Hessian eigenvalues {k} and {} coincide ({} vs {})",
                k + 1,
                w[0],
                w[1]
            )));
        }
    }
    Ok(jacobian_svd(g, z)?.u.matmul(&vectors))
}

/// Corresponding latent points of two generators for the same manifold point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct ProbePair<T> {
    pub z_g: Vec<T>,
    pub z_h: Vec<T>,
}

/// Thresholds for the comparison preconditions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareTolerances {
    pub constraint: f64,
    pub image: f64,
}

impl Default for CompareTolerances {
    fn default() -> Self {
        Self { constraint: 1e-4, image: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeamComparison {
    /// latent axis of `g` ↦ latent axis of `h`, with relative orientation
    pub alignment: AlignmentResult,
    /// largest `|log(p_i/s^i)_g − log(p_π(i)/s^π(i))_h|` over probes and latents
    pub max_factor_deviation: f64,
}

fn check_constraints<T: Real, G: Generator<T> + ?Sized>(g: &G, z: &[T], tol: f64, name: &str) -> Result<()> {
    let c1 = c1_score(g, z).map_err(|e| Error::PreconditionFailed(format!("{name}: {e}")))?.to_f64_lossy();
    let c2 = c2_score(g, z, T::lit(DEFAULT_FD_STEP))
        .map_err(|e| Error::PreconditionFailed(format!("{name}: {e}")))?
        .offdiag_mass
        .to_f64_lossy();
    if !(c1 < tol && c2 < tol) {
        return Err(Error::PreconditionFailed(format!("{name}: c1 {c1:e}, c2 off-diagonal {c2:e} exceed {tol:e}")));
    }
    Ok(())
}

/// Aligns the seam decompositions of two generators of the same manifold and compares
/// their 1-D seam factors `p_i(z_i)/s^i` at matched probe points.
pub fn compare_seam_decompositions<T, G, H, PG, PH>(
    g: &G,
    h: &H,
    prior_g: &PG,
    prior_h: &PH,
    probes: &[ProbePair<T>],
    tol: CompareTolerances,
) -> Result<SeamComparison>
where
    T: Real,
    G: Generator<T> + ?Sized,
    H: Generator<T> + ?Sized,
    PG: FactorPrior<T> + ?Sized,
    PH: FactorPrior<T> + ?Sized,
{
    if probes.is_empty() {
        return Err(Error::invalid("at least one probe pair is required"));
    }
    if g.latent_dim() != h.latent_dim() || g.output_dim() != h.output_dim() {
        return Err(Error::invalid("generators have different dimensions"));
    }
    let d = g.latent_dim();
    let mut result: Option<(Vec<usize>, Vec<i8>)> = None;
    let mut points = Vec::with_capacity(probes.len());
    let mut worst_residual: f64 = 0.0;
    let mut worst_factor: f64 = 0.0;
    for p in probes {
        let gap = norm(&sub_vec(&g.value(&p.z_g)?, &h.value(&p.z_h)?)).to_f64_lossy();
        if !(gap < tol.image) {
            return Err(Error::PreconditionFailed(format!("probe images differ by {gap:e}")));
        }
        check_constraints(g, &p.z_g, tol.constraint, "first generator")?;
        check_constraints(h, &p.z_h, tol.constraint, "second generator")?;

        let tg = jacobian_svd(g, &p.z_g)?;
        let th = jacobian_svd(h, &p.z_h)?;
        let cols = align_ps(&tg.u, &th.u)?;
        let (_, axes_g, sig_g) = signed_permutation_distance(&tg.v.transpose());
        let (_, axes_h, sig_h) = signed_permutation_distance(&th.v.transpose());
        let dg = manifold_density(g, &p.z_g, prior_g)?;
        let dh = manifold_density(h, &p.z_h, prior_h)?;

        let mut perm = vec![0usize; d];
        let mut signs = vec![0i8; d];
        let mut ratios = vec![0.0; d];
        for i in 0..d {
            let j = cols.permutation[i];
            let (a, b) = (axes_g[i], axes_h[j]);
            perm[a] = b;
            let s = cols.signs[i] as f64 * sig_g[i].to_f64_lossy() * sig_h[j].to_f64_lossy();
            signs[a] = if s < 0.0 { -1 } else { 1 };
            ratios[a] = (dg.factor_logs[i] - dh.factor_logs[j]).to_f64_lossy();
        }
        match &result {
            None => result = Some((perm, signs)),
            Some((p0, s0)) if *p0 == perm && *s0 == signs => {}
            Some(_) => {
                return Err(Error::GeometryInconsistent(
                    "latent correspondence differs between probe points".into(),
                ))
            }
        }
        worst_residual = worst_residual.max(cols.residual);
        worst_factor = ratios.iter().fold(worst_factor, |m, r| m.max(r.abs()));
        points.push(PointAlignment {
            z: p.z_g.iter().map(|v| v.to_f64_lossy()).collect(),
            residual: cols.residual,
            factor_log_ratios: ratios,
        });
    }
    let (permutation, signs) = result.expect("at least one probe");
    Ok(SeamComparison {
        alignment: AlignmentResult {
            permutation,
            signs,
            residual: worst_residual,
            method: AlignmentMethod::SeamDecomposition,
            points,
        },
        max_factor_deviation: worst_factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{plane_rotation, random_orthonormal};

    #[test]
    fn identical_and_signed_permuted_columns() {
        let t = random_orthonormal::<f64>(5, 3, 1);
        let same = align_ps(&t, &t).unwrap();
        assert_eq!(same.permutation, vec![0, 1, 2]);
        assert_eq!(same.signs, vec![1, 1, 1]);
        assert!(same.residual < 1e-12);

        let mut l = Matrix::zeros(5, 3);
        l.set_col(0, &t.col(1));
        l.set_col(1, &t.col(0).iter().map(|v| -v).collect::<Vec<_>>());
        l.set_col(2, &t.col(2));
        let r = align_ps(&l, &t).unwrap();
        assert_eq!(r.permutation, vec![1, 0, 2]);
        assert_eq!(r.signs, vec![1, -1, 1]);
        assert!(r.residual < 1e-12);
    }

    #[test]
    fn rotated_pair_residual() {
        let t = random_orthonormal::<f64>(6, 3, 2);
        let q = plane_rotation::<f64>(3, 0, 2, std::f64::consts::PI / 6.0);
        let r = align_ps(&t.matmul(&q), &t).unwrap();
        assert!((r.residual - (1.0 - (std::f64::consts::PI / 6.0).cos())).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let t = random_orthonormal::<f64>(5, 3, 1);
        assert!(align_ps(&t, &random_orthonormal::<f64>(5, 2, 1)).is_err());
        assert!(align_ps(&t.scale(2.0), &t).is_err());
    }
}
