use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{svd, sym_eig, Matrix};
use crate::scalar::Real;

use super::posterior::{Covariance, GaussianPosterior};

/// Maximum-likelihood linear model for fixed `σ²` with `R = I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct PpcaSolution<T> {
    pub w_star: Matrix<T>,
    pub m_cov: Matrix<T>,
    pub sigma2: T,
    pub u_x: Matrix<T>,
    pub lambda_x: Vec<T>,
}

/// `W* = U_X (Λ_X - σ² I)^{1/2}` from the top-`d` eigenpairs of the data covariance.
pub fn ppca_closed_form<T: Real>(data_cov: &Matrix<T>, d: usize, sigma2: T) -> Result<PpcaSolution<T>> {
    let m = data_cov.rows();
    if !data_cov.is_square() || d == 0 || d > m {
        return Err(Error::invalid(format!("need square covariance and 0 < d <= m, got {:?} and d={d}", data_cov.shape())));
    }
    if !(sigma2 > T::zero()) {
        return Err(Error::invalid("sigma2 must be positive"));
    }
    let (values, vectors) = sym_eig(data_cov)?;
    let lambda_x: Vec<T> = values[..d].to_vec();
    if let Some(k) = lambda_x.iter().position(|&l| l <= sigma2) {
        return Err(Error::DegenerateModel(format!(
            "eigenvalue {k} ({}) does not exceed sigma2 ({sigma2})",
            lambda_x[k]
        )));
    }
    let u_x = Matrix::from_fn(m, d, |i, j| vectors[(i, j)]);
    let loadings: Vec<T> = lambda_x.iter().map(|&l| (l - sigma2).sqrt()).collect();
    let w_star = u_x.matmul(&Matrix::from_diag(&loadings));
    let m_cov = posterior_cov(&w_star, sigma2)?;
    Ok(PpcaSolution { w_star, m_cov, sigma2, u_x, lambda_x })
}

fn posterior_cov<T: Real>(w: &Matrix<T>, sigma2: T) -> Result<Matrix<T>> {
    let mut a = w.gram().scale(sigma2.recip());
    for i in 0..a.rows() {
        a[(i, i)] += T::one();
    }
    Ok(a.inverse()?.symmetrize())
}

/// Exact posterior `N(M Wᵀx / σ², M)` with `M = (I + WᵀW/σ²)⁻¹`.
pub fn ppca_posterior<T: Real>(w: &Matrix<T>, sigma2: T, x: &[T]) -> Result<GaussianPosterior<T>> {
    if x.len() != w.rows() {
        return Err(Error::invalid(format!("x has length {}, expected {}", x.len(), w.rows())));
    }
    if !(sigma2 > T::zero()) {
        return Err(Error::invalid("sigma2 must be positive"));
    }
    let s = svd(w)?.s;
    let s_max = s.first().copied().unwrap_or_else(T::zero);
    if s.iter().any(|&v| v <= s_max * T::lit(1e-12)) || s_max == T::zero() {
        return Err(Error::invalid("decoder matrix is rank deficient"));
    }
    let m = posterior_cov(w, sigma2)?;
    let mean = m.mul_vec(&w.tr_mul_vec(x)).into_iter().map(|v| v / sigma2).collect();
    GaussianPosterior::new(mean, Covariance::Full(m))
}

/// One EM update of `W` at fixed `σ²` on centred column samples.
pub fn ppca_em_step<T: Real>(current_w: &Matrix<T>, sigma2: T, data: &Matrix<T>) -> Result<Matrix<T>> {
    if data.rows() != current_w.rows() {
        return Err(Error::invalid("data and decoder have different row counts"));
    }
    let n = T::lit(data.cols() as f64);
    let d = current_w.cols();
    // S W = X (Xᵀ W) / n
    let sw = data.matmul(&data.tr_matmul(current_w)).scale(n.recip());
    let mut m = current_w.gram();
    for i in 0..d {
        m[(i, i)] += sigma2;
    }
    let mut inner = m.inverse()?.matmul(&current_w.tr_matmul(&sw));
    for i in 0..d {
        inner[(i, i)] += sigma2;
    }
    Ok(sw.matmul(&inner.inverse()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn w_21() -> Matrix<f64> {
        Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap()
    }

    #[test]
    fn closed_form_diagonal_case() {
        let sol = ppca_closed_form(&Matrix::from_diag(&[5.0, 2.0, 1.0]), 2, 1.0).unwrap();
        assert!(sol.w_star.max_abs_diff(&w_21()) < 1e-12);
        assert_eq!(sol.lambda_x, vec![5.0, 2.0]);
    }

    #[test]
    fn boundary_eigenvalue_is_degenerate() {
        let err = ppca_closed_form(&Matrix::<f64>::identity(3), 1, 1.0).unwrap_err();
        assert!(matches!(err, Error::DegenerateModel(_)));
    }

    #[test]
    fn posterior_example() {
        let q = ppca_posterior(&w_21(), 1.0, &[2.0, 1.0, 7.0]).unwrap();
        assert_abs_diff_eq!(q.mean[0], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(q.mean[1], 0.5, epsilon = 1e-12);
        let expect = Matrix::from_diag(&[0.2, 0.5]);
        assert!(q.cov_matrix().max_abs_diff(&expect) < 1e-12);
        let zero = ppca_posterior(&w_21(), 1.0, &[0.0; 3]).unwrap();
        assert_eq!(zero.mean, vec![0.0, 0.0]);
    }

    #[test]
    fn rank_deficient_posterior_rejected() {
        let w = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(ppca_posterior(&w, 1.0, &[0.0; 3]), Err(Error::InvalidInput(_))));
    }
}
