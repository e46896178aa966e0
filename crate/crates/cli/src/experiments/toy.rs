//! Shared pieces of the nonlinear experiments on toy-factor images.

use seamlab::datagen::render_toy_factors;
use seamlab::linalg::Matrix;
use seamlab::lvm::{BetaSchedule, CovMode, LvmConfig, TrainOptions, TrainedModel};
use seamlab::metrics::{aas, constraint_report, mig, mutual_info_matrix, ConstraintReport, MiMatrix, Probe, DEFAULT_FD_STEP};
use seamlab::net::{Activation, NetSpec};

use super::sub_seed;
use crate::config::ToyVaeConfig;

pub(super) struct ToyData {
    /// pixels × n
    pub images: Matrix<f64>,
    /// n × 3 factor levels
    pub labels: Matrix<f64>,
    pub columns: Vec<Vec<f64>>,
}

pub(super) fn load(c: &ToyVaeConfig) -> seamlab::Result<ToyData> {
    let (images, labels) = render_toy_factors::<f64>(&c.toy)?;
    let columns = (0..images.cols()).map(|k| images.col(k)).collect();
    Ok(ToyData { images, labels, columns })
}

pub(super) fn mode_name(mode: CovMode) -> &'static str {
    match mode {
        CovMode::Diagonal => "diagonal",
        CovMode::Full => "full",
    }
}

/// MLP encoder, decoder and amortized covariance head, all with one tanh hidden layer.
pub(super) fn init_model(
    c: &ToyVaeConfig,
    m: usize,
    beta: BetaSchedule,
    mode: CovMode,
    seed: u64,
) -> seamlab::Result<TrainedModel<f64>> {
    let cfg = LvmConfig { d: c.d, m, sigma2: c.sigma2, beta, cov_mode: mode };
    let h = c.hidden;
    TrainedModel::init(
        cfg,
        NetSpec::mlp(vec![m, h, c.d], Activation::Tanh, sub_seed(seed, 1)),
        NetSpec::mlp(vec![c.d, h, m], Activation::Tanh, sub_seed(seed, 2)),
        Some(NetSpec::mlp(vec![m, h, mode.n_params(c.d)], Activation::Tanh, sub_seed(seed, 3))),
    )
}

pub(super) fn train_options(c: &ToyVaeConfig, seed: u64) -> TrainOptions {
    let mut opts = TrainOptions::new(c.epochs, c.lr, sub_seed(seed, 4));
    opts.momentum = c.momentum;
    opts.batch_size = c.batch_size;
    opts.grad_clip = c.grad_clip;
    opts
}

pub(super) struct ToyEval {
    pub mi: MiMatrix,
    pub aas: f64,
    pub mig: f64,
    /// mean squared pixel error of the decoded posterior means
    pub recon_mse: f64,
}

/// Disentanglement scores from posterior means, plus reconstruction error.
pub(super) fn evaluate(model: &TrainedModel<f64>, data: &ToyData, bins: usize) -> seamlab::Result<ToyEval> {
    let n = data.columns.len();
    let d = model.config.d;
    let mut codes = Matrix::zeros(n, d);
    let mut sq = 0.0;
    for (k, x) in data.columns.iter().enumerate() {
        let q = model.posterior(x)?;
        for i in 0..d {
            codes[(k, i)] = q.mean[i];
        }
        let y = model.decoder.forward(&q.mean)?;
        sq += x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    let mi = mutual_info_matrix(&codes, &data.labels, bins)?;
    Ok(ToyEval { aas: aas(&mi)?, mig: mig(&mi)?, recon_mse: sq / (n * data.images.rows()) as f64, mi })
}

/// Constraint scores at evenly spaced probe images under their posteriors.
pub(super) fn constraints(
    model: &TrainedModel<f64>,
    data: &ToyData,
    c: &ToyVaeConfig,
    beta: f64,
    seed: u64,
) -> seamlab::Result<ConstraintReport> {
    let n = data.columns.len();
    let probes: Vec<Probe<f64>> = (0..c.n_probes)
        .map(|k| {
            let x = data.columns[k * n / c.n_probes].clone();
            model.posterior(&x).map(|q| Probe { x, q })
        })
        .collect::<seamlab::Result<_>>()?;
    constraint_report(&model.decoder, &probes, c.sigma2, beta, c.probe_n_mc, sub_seed(seed, 5), DEFAULT_FD_STEP)
}
