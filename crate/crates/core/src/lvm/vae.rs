use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{gaussian_vec, rng};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::net::{Net, NetParams, NetSpec};
use crate::scalar::{ln_2pi, Real};

use super::posterior::{Covariance, GaussianPosterior};
use super::{CovMode, LvmConfig};

/// Covariance parameters of `q(z|x)`.
///
/// Diagonal mode stores log-variances. Full mode stores the lower triangle of
/// `L` row by row, with the diagonal entries on a log scale, so `Σ = L Lᵀ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", bound(deserialize = "T: Real"))]
pub enum CovHead<T> {
    /// One covariance shared by every input.
    Shared { params: Vec<T> },
    /// Covariance parameters predicted from `x`.
    Amortized { net: Net<T> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub beta: f64,
    pub recon: f64,
    /// unweighted KL
    pub kl: f64,
    pub elbo: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct TrainedModel<T> {
    pub config: LvmConfig,
    pub encoder: Net<T>,
    pub decoder: Net<T>,
    pub cov_head: CovHead<T>,
    pub log: Vec<EpochLog>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboTerms<T> {
    pub total: T,
    pub recon: T,
    /// `β · KL`
    pub kl_term: T,
}

/// Gradient (or velocity) with the same layout as a model's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads<T> {
    pub encoder: NetParams<T>,
    pub decoder: NetParams<T>,
    pub cov_shared: Vec<T>,
    pub cov_net: Option<NetParams<T>>,
}

impl<T: Real> ModelGrads<T> {
    pub fn zeros_like(model: &TrainedModel<T>) -> Self {
        let (cov_shared, cov_net) = match &model.cov_head {
            CovHead::Shared { params } => (vec![T::zero(); params.len()], None),
            CovHead::Amortized { net } => (Vec::new(), Some(net.layers.zeros_like())),
        };
        Self { encoder: model.encoder.layers.zeros_like(), decoder: model.decoder.layers.zeros_like(), cov_shared, cov_net }
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut out = self.encoder.to_flat();
        out.extend(self.decoder.to_flat());
        out.extend_from_slice(&self.cov_shared);
        if let Some(c) = &self.cov_net {
            out.extend(c.to_flat());
        }
        out
    }

    /// Inverse of [`ModelGrads::to_flat`].
    pub fn set_flat(&mut self, flat: &[T]) {
        let mut at = 0;
        for part in [&mut self.encoder, &mut self.decoder] {
            let n = part.len();
            part.set_flat(&flat[at..at + n]);
            at += n;
        }
        let n = self.cov_shared.len();
        self.cov_shared.copy_from_slice(&flat[at..at + n]);
        at += n;
        if let Some(c) = &mut self.cov_net {
            let n = c.len();
            c.set_flat(&flat[at..at + n]);
        }
    }

    pub fn axpy(&mut self, a: T, other: &Self) {
        self.encoder.axpy(a, &other.encoder);
        self.decoder.axpy(a, &other.decoder);
        for (x, &y) in self.cov_shared.iter_mut().zip(&other.cov_shared) {
            *x += a * y;
        }
        if let (Some(c), Some(o)) = (&mut self.cov_net, &other.cov_net) {
            c.axpy(a, o);
        }
    }

    pub fn scale_in_place(&mut self, a: T) {
        self.encoder.scale_in_place(a);
        self.decoder.scale_in_place(a);
        self.cov_shared.iter_mut().for_each(|x| *x *= a);
        if let Some(c) = &mut self.cov_net {
            c.scale_in_place(a);
        }
    }

    pub fn norm(&self) -> T {
        let f = self.to_flat();
        dot(&f, &f).sqrt()
    }
}

impl<T: Real> TrainedModel<T> {
    /// Fresh model. Without `cov_net` the covariance is shared and starts at the identity.
    pub fn init(config: LvmConfig, encoder: NetSpec, decoder: NetSpec, cov_net: Option<NetSpec>) -> Result<Self> {
        config.validate()?;
        let (d, m) = (config.d, config.m);
        if encoder.input_dim() != m || encoder.output_dim() != d {
            return Err(Error::invalid(format!("encoder must map {m} -> {d}, got {:?}", encoder.widths)));
        }
        if decoder.input_dim() != d || decoder.output_dim() != m {
            return Err(Error::invalid(format!("decoder must map {d} -> {m}, got {:?}", decoder.widths)));
        }
        let k = config.cov_mode.n_params(d);
        let cov_head = match cov_net {
            None => CovHead::Shared { params: vec![T::zero(); k] },
            Some(spec) => {
                if spec.input_dim() != m || spec.output_dim() != k {
                    return Err(Error::invalid(format!("covariance net must map {m} -> {k}, got {:?}", spec.widths)));
                }
                CovHead::Amortized { net: Net::new(spec)? }
            }
        };
        Ok(Self { config, encoder: Net::new(encoder)?, decoder: Net::new(decoder)?, cov_head, log: Vec::new() })
    }

    pub fn sigma2(&self) -> T {
        T::lit(self.config.sigma2)
    }

    pub fn cov_params(&self, x: &[T]) -> Result<Vec<T>> {
        match &self.cov_head {
            CovHead::Shared { params } => Ok(params.clone()),
            CovHead::Amortized { net } => net.forward(x),
        }
    }

    pub fn posterior(&self, x: &[T]) -> Result<GaussianPosterior<T>> {
        let mean = self.encoder.forward(x)?;
        let params = self.cov_params(x)?;
        let cov = match self.config.cov_mode {
            CovMode::Diagonal => Covariance::Diagonal(params.iter().map(|p| p.exp()).collect()),
            CovMode::Full => {
                let l = scale_factor(CovMode::Full, self.config.d, &params);
                Covariance::Full(l.matmul(&l.transpose()))
            }
        };
        GaussianPosterior::new(mean, cov)
    }

    pub fn reconstruct(&self, x: &[T]) -> Result<Vec<T>> {
        self.decoder.forward(&self.encoder.forward(x)?)
    }

    fn params_finite(&self) -> bool {
        self.encoder.layers.is_finite()
            && self.decoder.layers.is_finite()
            && match &self.cov_head {
                CovHead::Shared { params } => params.iter().all(|p| p.is_finite()),
                CovHead::Amortized { net } => net.layers.is_finite(),
            }
    }

    /// `θ += a · g`
    pub fn apply_step(&mut self, a: T, g: &ModelGrads<T>) {
        self.encoder.layers.axpy(a, &g.encoder);
        self.decoder.layers.axpy(a, &g.decoder);
        match &mut self.cov_head {
            CovHead::Shared { params } => {
                for (p, &v) in params.iter_mut().zip(&g.cov_shared) {
                    *p += a * v;
                }
            }
            CovHead::Amortized { net } => {
                if let Some(c) = &g.cov_net {
                    net.layers.axpy(a, c);
                }
            }
        }
    }

    /// Continues training for `opts.epochs` epochs; β follows the schedule from the current log length.
    pub fn fit(&mut self, data: &Matrix<T>, opts: &TrainOptions) -> Result<()> {
        self.fit_observed(data, opts, |_| Ok(()))
    }

    /// Like [`fit`](Self::fit), calling `on_epoch` after every completed epoch.
    pub fn fit_observed(
        &mut self,
        data: &Matrix<T>,
        opts: &TrainOptions,
        mut on_epoch: impl FnMut(&Self) -> Result<()>,
    ) -> Result<()> {
        opts.validate()?;
        if data.rows() != self.config.m {
            return Err(Error::invalid(format!("data has {} rows, model expects {}", data.rows(), self.config.m)));
        }
        let n = data.cols();
        if n == 0 {
            return Err(Error::invalid("empty dataset"));
        }
        let cols: Vec<Vec<T>> = (0..n).map(|k| data.col(k)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = rng(opts.seed ^ ((self.log.len() as u64) << 32));
        let mut velocity = ModelGrads::zeros_like(self);
        let sigma2 = self.sigma2();
        let d = self.config.d;
        for _ in 0..opts.epochs {
            let epoch = self.log.len();
            let beta_f = self.config.beta.at(epoch);
            let beta = T::lit(beta_f);
            order.shuffle(&mut rng);
            let (mut recon_sum, mut kl_sum) = (0.0, 0.0);
            for batch in order.chunks(opts.batch_size) {
                let mut grads = ModelGrads::zeros_like(self);
                for &k in batch {
                    let eps: Vec<Vec<T>> = (0..opts.n_mc).map(|_| gaussian_vec(&mut rng, d)).collect();
                    let (recon, kl) = loss_gradient(self, &cols[k], beta, sigma2, &eps, &mut grads)?;
                    recon_sum += recon.to_f64_lossy();
                    kl_sum += kl.to_f64_lossy();
                }
                grads.scale_in_place(T::lit(1.0 / batch.len() as f64));
                let norm = grads.norm();
                if !norm.is_finite() {
                    return Err(Error::NumericalFailure { message: "non-finite gradient".into(), epoch: Some(epoch) });
                }
                if let Some(clip) = opts.grad_clip {
                    let clip = T::lit(clip);
                    if norm > clip {
                        grads.scale_in_place(clip / norm);
                    }
                }
                velocity.scale_in_place(T::lit(opts.momentum));
                velocity.axpy(T::one(), &grads);
                self.apply_step(-T::lit(opts.lr), &velocity);
            }
            let (recon, kl) = (recon_sum / n as f64, kl_sum / n as f64);
            let elbo = recon - beta_f * kl;
            if !elbo.is_finite() || !self.params_finite() {
                return Err(Error::NumericalFailure { message: "training diverged".into(), epoch: Some(epoch) });
            }
            self.log.push(EpochLog { epoch, beta: beta_f, recon, kl, elbo });
            on_epoch(self)?;
        }
        Ok(())
    }
}

/// Lower-triangular scale factor `L` from raw covariance parameters.
fn scale_factor<T: Real>(mode: CovMode, d: usize, params: &[T]) -> Matrix<T> {
    match mode {
        CovMode::Diagonal => Matrix::from_diag(&params.iter().map(|&p| (p * T::lit(0.5)).exp()).collect::<Vec<_>>()),
        CovMode::Full => {
            let mut l = Matrix::zeros(d, d);
            let mut k = 0;
            for i in 0..d {
                for j in 0..=i {
                    l[(i, j)] = if i == j { params[k].exp() } else { params[k] };
                    k += 1;
                }
            }
            l
        }
    }
}

/// Adds the gradient of `-(recon - β KL)` at one input to `grads`; returns `(recon, KL)`.
fn loss_gradient<T: Real>(
    model: &TrainedModel<T>,
    x: &[T],
    beta: T,
    sigma2: T,
    eps: &[Vec<T>],
    grads: &mut ModelGrads<T>,
) -> Result<(T, T)> {
    let d = model.config.d;
    let mode = model.config.cov_mode;
    let enc = model.encoder.forward_cached(x)?;
    let mu = &enc.output;
    let (params, cov_cache) = match &model.cov_head {
        CovHead::Shared { params } => (params.clone(), None),
        CovHead::Amortized { net } => {
            let c = net.forward_cached(x)?;
            (c.output.clone(), Some(c))
        }
    };
    let l = scale_factor(mode, d, &params);
    let log_norm = T::lit(0.5 * x.len() as f64) * (ln_2pi::<T>() + sigma2.ln());
    let inv_s = T::lit(1.0 / eps.len() as f64);

    let mut g_mu = vec![T::zero(); d];
    let mut g_l = Matrix::zeros(d, d);
    let mut recon = T::zero();
    for e in eps {
        let z: Vec<T> = mu.iter().zip(l.mul_vec(e)).map(|(&m, v)| m + v).collect();
        let dec = model.decoder.forward_cached(&z)?;
        let mut sq = T::zero();
        let grad_out: Vec<T> = x
            .iter()
            .zip(&dec.output)
            .map(|(&xi, &yi)| {
                let r = xi - yi;
                sq += r * r;
                -r * inv_s / sigma2
            })
            .collect();
        recon += (-sq / (T::lit(2.0) * sigma2) - log_norm) * inv_s;
        let gz = model.decoder.backward(&dec, &grad_out, &mut grads.decoder);
        for i in 0..d {
            g_mu[i] += gz[i];
            match mode {
                CovMode::Diagonal => g_l[(i, i)] += gz[i] * e[i],
                CovMode::Full => {
                    for j in 0..=i {
                        g_l[(i, j)] += gz[i] * e[j];
                    }
                }
            }
        }
    }

    // KL = ½(tr LLᵀ + μᵀμ - d - 2 Σ log L_ii)
    let mut kl = dot(mu, mu) - T::lit(d as f64);
    for i in 0..d {
        g_mu[i] += beta * mu[i];
        let first = if mode == CovMode::Full { 0 } else { i };
        for j in first..=i {
            let lij = l[(i, j)];
            kl += lij * lij;
            g_l[(i, j)] += beta * lij;
        }
        let lii = l[(i, i)];
        kl -= T::lit(2.0) * lii.ln();
        g_l[(i, i)] -= beta / lii;
    }
    kl *= T::lit(0.5);

    let g_params: Vec<T> = match mode {
        CovMode::Diagonal => (0..d).map(|i| g_l[(i, i)] * l[(i, i)] * T::lit(0.5)).collect(),
        CovMode::Full => {
            let mut out = Vec::with_capacity(params.len());
            for i in 0..d {
                for j in 0..=i {
                    out.push(if i == j { g_l[(i, i)] * l[(i, i)] } else { g_l[(i, j)] });
                }
            }
            out
        }
    };
    model.encoder.backward(&enc, &g_mu, &mut grads.encoder);
    match (&model.cov_head, cov_cache) {
        (CovHead::Amortized { net }, Some(c)) => {
            let g = grads.cov_net.as_mut().expect("gradient layout matches the model");
            net.backward(&c, &g_params, g);
        }
        _ => {
            for (a, b) in grads.cov_shared.iter_mut().zip(&g_params) {
                *a += *b;
            }
        }
    }
    Ok((recon, kl))
}

/// Reparameterized Monte Carlo estimate of the β-ELBO at one input.
pub fn elbo<T: Real>(model: &TrainedModel<T>, x: &[T], n_mc: usize, beta: T, seed: u64) -> Result<ElboTerms<T>> {
    if n_mc == 0 {
        return Err(Error::invalid("n_mc must be at least 1"));
    }
    let q = model.posterior(x).map_err(|e| match e {
        Error::InvalidInput(m) => Error::InvalidInput(m),
        other => Error::numerical(format!("invalid posterior: {other}")),
    })?;
    let l = q.scale_factor().map_err(|e| Error::numerical(format!("invalid posterior: {e}")))?;
    let mut rng: ChaCha8Rng = rng(seed);
    let sigma2 = model.sigma2();
    let log_norm = T::lit(0.5 * x.len() as f64) * (ln_2pi::<T>() + sigma2.ln());
    let mut recon = T::zero();
    for _ in 0..n_mc {
        let e: Vec<T> = gaussian_vec(&mut rng, q.dim());
        let z: Vec<T> = q.mean.iter().zip(l.mul_vec(&e)).map(|(&m, v)| m + v).collect();
        let y = model.decoder.forward(&z)?;
        let sq: T = x.iter().zip(&y).map(|(&a, &b)| (a - b) * (a - b)).sum();
        recon += -sq / (T::lit(2.0) * sigma2) - log_norm;
    }
    recon /= T::lit(n_mc as f64);
    let kl_term = beta * q.kl_to_standard_normal()?;
    Ok(ElboTerms { total: recon - kl_term, recon, kl_term })
}

/// Gradient of the batch-mean β-ELBO with respect to every model parameter,
/// using `n_mc` seeded draws per input. Returns `(mean ELBO, gradient)`.
pub fn elbo_gradient<T: Real>(
    model: &TrainedModel<T>,
    batch: &[Vec<T>],
    beta: T,
    sigma2: T,
    n_mc: usize,
    seed: u64,
) -> Result<(T, ModelGrads<T>)> {
    if n_mc == 0 || batch.is_empty() {
        return Err(Error::invalid("need n_mc >= 1 and a non-empty batch"));
    }
    let mut rng = rng(seed);
    let mut grads = ModelGrads::zeros_like(model);
    let mut total = T::zero();
    for x in batch {
        let eps: Vec<Vec<T>> = (0..n_mc).map(|_| gaussian_vec(&mut rng, model.config.d)).collect();
        let (recon, kl) = loss_gradient(model, x, beta, sigma2, &eps, &mut grads)?;
        total += recon - beta * kl;
    }
    let inv_n = T::lit(1.0 / batch.len() as f64);
    grads.scale_in_place(-inv_n);
    Ok((total * inv_n, grads))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    #[serde(default)]
    pub momentum: f64,
    pub batch_size: usize,
    #[serde(default = "one")]
    pub n_mc: usize,
    pub seed: u64,
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

fn one() -> usize {
    1
}

impl TrainOptions {
    pub fn new(epochs: usize, lr: f64, seed: u64) -> Self {
        Self { epochs, lr, momentum: 0.9, batch_size: 64, n_mc: 1, seed, grad_clip: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.momentum) || self.batch_size == 0 || self.n_mc == 0 {
            return Err(Error::invalid(format!("invalid training options {self:?}")));
        }
        Ok(())
    }
}

/// Initializes a model from the given specs and runs gradient ascent on the β-ELBO.
pub fn train_gaussian_vae<T: Real>(
    config: LvmConfig,
    data: &Matrix<T>,
    encoder: NetSpec,
    decoder: NetSpec,
    cov_net: Option<NetSpec>,
    opts: &TrainOptions,
) -> Result<TrainedModel<T>> {
    let mut model = TrainedModel::init(config, encoder, decoder, cov_net)?;
    model.fit(data, opts)?;
    Ok(model)
}
