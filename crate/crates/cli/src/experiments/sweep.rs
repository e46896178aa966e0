//! Nonlinear VAEs across β: disentanglement scores and decoder-derivative diagonality.

use seamlab::lvm::BetaSchedule;

use super::toy::{self, mode_name};
use super::{epochs_csv, sub_seed, SeedOutput};
use crate::config::BetaSweepConfig;
use crate::error::{Result, StageContext};

pub(super) fn run(c: &BetaSweepConfig, seed: u64) -> Result<SeedOutput> {
    let mut out = SeedOutput::default();
    let data = toy::load(&c.model).stage(|| format!("seed {seed}: toy data"))?;
    let m = data.images.rows();
    for (k, &mode) in c.cov_modes.iter().enumerate() {
        let name = mode_name(mode);
        for (b, &beta) in c.betas.iter().enumerate() {
            let stage = |what: &str| format!("seed {seed}: {name} beta {beta} {what}");
            // the same initialization for every β so that only β differs
            let base = sub_seed(seed, 20 + k as u64);
            let mut model = toy::init_model(&c.model, m, BetaSchedule::constant(beta), mode, base)
                .stage(|| stage("init"))?;
            model.fit(&data.images, &toy::train_options(&c.model, base)).stage(|| stage("training"))?;
            let eval = toy::evaluate(&model, &data, c.model.bins).stage(|| stage("evaluation"))?;
            let report =
                toy::constraints(&model, &data, &c.model, beta, sub_seed(base, b as u64)).stage(|| stage("constraints"))?;
            let x = Some(beta);
            out.row(seed, name, x, "aas", eval.aas);
            out.row(seed, name, x, "mig", eval.mig);
            out.row(seed, name, x, "jtj_offdiag", report.jtj_offdiag);
            out.row(seed, name, x, "hess_term_offdiag", report.hess_term_offdiag);
            out.row(seed, name, x, "c1", report.c1_distance);
            out.row(seed, name, x, "c2_offdiag", report.c2_offdiag);
            out.row(seed, name, x, "recon_mse", eval.recon_mse);
            out.row(seed, name, x, "elbo", model.log.last().expect("at least one epoch").elbo);
            let tag = format!("{name}_beta{beta}_seed{seed}");
            out.file(format!("metrics/mi_{tag}.csv"), eval.mi.to_heatmap_csv());
            out.file(format!("metrics/epochs_{tag}.csv"), epochs_csv(&model.log, None));
            out.json(format!("models/{tag}.json"), &model);
        }
    }
    Ok(out)
}
