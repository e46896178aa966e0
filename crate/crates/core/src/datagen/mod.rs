//! Ground-truth data: linear Gaussian LVM samples, constructed C1–C2 generators and
//! their entangled controls, push-forward samples and toy factor images.

mod generators;
mod maps;
mod toy;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use generators::{
    make_c1c2_generator, make_entangled_control, C1C2Generator, Precomposed, PulledBackPrior, Reparameterized,
};
pub use maps::{banded_phis, default_phis, MonotoneMap};
pub use toy::{render_toy_factors, ToyFactorSpec};

use crate::error::{Error, Result};
use crate::geometry::Generator;
use crate::linalg::{dot, Matrix};
use crate::scalar::Real;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian<T: Real>(rng: &mut ChaCha8Rng) -> T {
    let g: f64 = StandardNormal.sample(rng);
    T::lit(g)
}

pub fn gaussian_vec<T: Real>(rng: &mut ChaCha8Rng, n: usize) -> Vec<T> {
    (0..n).map(|_| gaussian(rng)).collect()
}

/// Seeded `m × d` matrix with orthonormal columns (Gram–Schmidt on Gaussian draws).
pub fn random_orthonormal<T: Real>(m: usize, d: usize, seed: u64) -> Matrix<T> {
    assert!(d <= m);
    let mut rng = rng(seed);
    let mut cols: Vec<Vec<T>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut w: Vec<T> = gaussian_vec(&mut rng, m);
        for _ in 0..2 {
            for c in &cols {
                let p = dot(&w, c);
                w.iter_mut().zip(c).for_each(|(wi, &ci)| *wi -= p * ci);
            }
        }
        let n = dot(&w, &w).sqrt();
        if n > T::lit(1e-6) {
            cols.push(w.into_iter().map(|x| x / n).collect());
        }
    }
    Matrix::from_cols(&cols).expect("consistent columns")
}

/// Seeded proper rotation (`det = +1`).
pub fn random_rotation<T: Real>(d: usize, seed: u64) -> Matrix<T> {
    let mut q = random_orthonormal::<T>(d, d, seed);
    if q.det().expect("square") < T::zero() {
        for i in 0..d {
            q[(i, 0)] = -q[(i, 0)];
        }
    }
    q
}

/// Plane rotation by `angle` in coordinates `(a, b)` of `R^d`.
pub fn plane_rotation<T: Real>(d: usize, a: usize, b: usize, angle: T) -> Matrix<T> {
    let mut r = Matrix::identity(d);
    let (s, c) = angle.sin_cos();
    r[(a, a)] = c;
    r[(a, b)] = -s;
    r[(b, a)] = s;
    r[(b, b)] = c;
    r
}

/// `x = W z + ε`, `z ~ N(0, I)`, `ε ~ N(0, σ² I)`; one sample per column.
pub fn sample_linear_lvm<T: Real>(w: &Matrix<T>, sigma2: T, n: usize, seed: u64) -> Matrix<T> {
    let mut rng = rng(seed);
    let sigma = sigma2.max(T::zero()).sqrt();
    let (m, d) = w.shape();
    let mut out = Matrix::zeros(m, n);
    for k in 0..n {
        let z: Vec<T> = gaussian_vec(&mut rng, d);
        let x = w.mul_vec(&z);
        for i in 0..m {
            out[(i, k)] = x[i] + sigma * gaussian::<T>(&mut rng);
        }
    }
    out
}

/// `x = g(z) + ε` with `z ~ N(0, I)`; returns `(data m×n, latents d×n)`.
pub fn sample_pushforward<T: Real, G: Generator<T> + ?Sized>(
    g: &G,
    sigma2: T,
    n: usize,
    seed: u64,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let mut rng = rng(seed);
    let sigma = sigma2.max(T::zero()).sqrt();
    let (m, d) = (g.output_dim(), g.latent_dim());
    let mut data = Matrix::zeros(m, n);
    let mut latents = Matrix::zeros(d, n);
    for k in 0..n {
        let z: Vec<T> = gaussian_vec(&mut rng, d);
        let x = g.value(&z)?;
        for i in 0..m {
            data[(i, k)] = x[i] + sigma * gaussian::<T>(&mut rng);
        }
        latents.set_col(k, &z);
    }
    Ok((data, latents))
}

/// Sample covariance `X Xᵀ / n` of column samples (data assumed centred).
pub fn sample_covariance<T: Real>(data: &Matrix<T>) -> Matrix<T> {
    let n = T::lit(data.cols() as f64);
    let mut cov = Matrix::zeros(data.rows(), data.rows());
    for i in 0..data.rows() {
        for j in 0..=i {
            let v = dot(data.row(i), data.row(j)) / n;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}

/// Subtracts each row's mean (per-feature centring of column samples).
pub fn center_rows<T: Real>(data: &Matrix<T>) -> Matrix<T> {
    let mut out = data.clone();
    let n = T::lit(data.cols() as f64);
    for i in 0..data.rows() {
        let mean = data.row(i).iter().copied().sum::<T>() / n;
        out.row_mut(i).iter_mut().for_each(|v| *v -= mean);
    }
    out
}

/// JSON sidecar written next to every dataset CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub generator: serde_json::Value,
    pub seed: u64,
    pub n: usize,
    pub sigma2: f64,
}

/// Writes `<stem>.csv` (one sample per column, no header) and `<stem>.json`.
pub fn write_dataset<T: Real>(dir: &Path, stem: &str, data: &Matrix<T>, sidecar: &DatasetSidecar) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{stem}.csv")), data.to_csv())?;
    std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(sidecar)?)?;
    Ok(())
}

pub fn read_dataset<T: Real>(dir: &Path, stem: &str) -> Result<(Matrix<T>, DatasetSidecar)> {
    let data = Matrix::from_csv(&std::fs::read_to_string(dir.join(format!("{stem}.csv")))?)?;
    let sidecar: DatasetSidecar = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
    if data.cols() != sidecar.n {
        return Err(Error::invalid("dataset column count differs from its sidecar"));
    }
    Ok((data, sidecar))
}
