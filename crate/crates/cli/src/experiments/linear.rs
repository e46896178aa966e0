//! Linear VAEs on linear-Gaussian data: diagonal posteriors pick out the PPCA axes,
//! full posteriors leave the decoder rotated.

use seamlab::datagen::{random_orthonormal, sample_covariance, sample_linear_lvm};
use seamlab::linalg::{dot, norm, signed_permutation_distance, Matrix};
use seamlab::lvm::{ppca_closed_form, BetaSchedule, CovMode, LvmConfig, TrainOptions, TrainedModel};
use seamlab::metrics::c1_score;
use seamlab::net::{Activation, NetSpec};

use super::{epochs_csv, sub_seed, SeedOutput};
use crate::config::LinearSymmetryConfig;
use crate::error::{Result, StageContext};

/// Matches columns of `learned` to `truth` by Hungarian assignment on `|cos|`, then
/// returns the max-abs entry error of the signed, permuted columns relative to `max |truth|`.
pub fn aligned_column_residual(learned: &Matrix<f64>, truth: &Matrix<f64>) -> f64 {
    let d = truth.cols();
    let cos = Matrix::from_fn(d, d, |i, j| {
        let (a, b) = (learned.col(i), truth.col(j));
        dot(&a, &b) / (norm(&a) * norm(&b))
    });
    let (_, perm, signs) = signed_permutation_distance(&cos);
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for r in 0..truth.rows() {
            worst = worst.max((signs[i] * learned[(r, i)] - truth[(r, perm[i])]).abs());
        }
    }
    worst / truth.max_abs()
}

fn mode_name(mode: CovMode) -> &'static str {
    match mode {
        CovMode::Diagonal => "diagonal",
        CovMode::Full => "full",
    }
}

pub(super) fn run(c: &LinearSymmetryConfig, seed: u64) -> Result<SeedOutput> {
    let mut out = SeedOutput::default();
    let truth = random_orthonormal::<f64>(c.m, c.d, sub_seed(seed, 1)).matmul(&Matrix::from_diag(&c.loadings));
    let data = sample_linear_lvm(&truth, c.sigma2, c.n, sub_seed(seed, 2));
    let ppca = ppca_closed_form(&sample_covariance(&data), c.d, c.sigma2).stage(|| format!("seed {seed}: ppca"))?;
    out.json(format!("models/ppca_seed{seed}.json"), &ppca.w_star);
    let origin = vec![0.0; c.d];

    for (k, &mode) in c.cov_modes.iter().enumerate() {
        let name = mode_name(mode);
        let stage = |what: &str| format!("seed {seed}: {name} {what}");
        let cfg = LvmConfig { d: c.d, m: c.m, sigma2: c.sigma2, beta: BetaSchedule::constant(1.0), cov_mode: mode };
        let base = sub_seed(seed, 10 + k as u64);
        let mut model = TrainedModel::<f64>::init(
            cfg,
            NetSpec::mlp(vec![c.m, c.d], Activation::Identity, sub_seed(base, 1)),
            NetSpec::mlp(vec![c.d, c.m], Activation::Identity, sub_seed(base, 2)),
            None,
        )
        .stage(|| stage("init"))?;
        let mut c1_trace = Vec::new();
        for (p, phase) in c.phases.iter().enumerate() {
            let mut opts = TrainOptions::new(phase.epochs, phase.lr, sub_seed(base, 100 + p as u64));
            opts.momentum = c.momentum;
            opts.grad_clip = c.grad_clip;
            opts.batch_size = phase.batch_size;
            opts.n_mc = phase.n_mc;
            model
                .fit_observed(&data, &opts, |m| {
                    c1_trace.push(c1_score(&m.decoder, &origin)?);
                    Ok(())
                })
                .stage(|| stage("training"))?;
        }
        let decoder = &model.decoder.layers.layers[0].w;
        let last = model.log.last().expect("at least one epoch");
        out.row(seed, name, None, "c1", *c1_trace.last().expect("at least one epoch"));
        out.row(seed, name, None, "ppca_residual", aligned_column_residual(decoder, &ppca.w_star));
        out.row(seed, name, None, "elbo", last.elbo);
        out.row(seed, name, None, "recon", last.recon);
        out.row(seed, name, None, "kl", last.kl);
        out.file(format!("metrics/epochs_{name}_seed{seed}.csv"), epochs_csv(&model.log, Some(("c1", &c1_trace))));
        out.json(format!("models/{name}_seed{seed}.json"), &model);
    }
    Ok(out)
}
