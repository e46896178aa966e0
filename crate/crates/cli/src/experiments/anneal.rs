//! Constant high β, constant low β and a high-to-low schedule, compared at the
//! start, midpoint and end of training.

use seamlab::lvm::{BetaSchedule, CovMode};

use super::toy;
use super::{epochs_csv, sub_seed, SeedOutput};
use crate::config::BetaAnnealConfig;
use crate::error::{Result, StageContext};

/// `(recon_mse, aas)` per variant at the final epoch.
struct Finals {
    high: (f64, f64),
    low: (f64, f64),
    annealed: (f64, f64),
}

pub(super) fn run(c: &BetaAnnealConfig, seed: u64) -> Result<SeedOutput> {
    let mut out = SeedOutput::default();
    let data = toy::load(&c.model).stage(|| format!("seed {seed}: toy data"))?;
    let m = data.images.rows();
    let epochs = c.model.epochs;
    let hold = ((epochs as f64 * c.hold_fraction) as usize).min(epochs - 1);
    let checkpoints = [1, epochs / 2, epochs];
    let schedules = [
        ("high", BetaSchedule::constant(c.beta_high)),
        ("low", BetaSchedule::constant(c.beta_low)),
        (
            "annealed",
            BetaSchedule::Exponential { from: c.beta_high, to: c.beta_low, start_epoch: hold, end_epoch: epochs - 1 },
        ),
    ];
    let base = sub_seed(seed, 30);
    let mut finals = Vec::new();
    for (name, schedule) in schedules {
        let stage = |what: &str| format!("seed {seed}: {name} {what}");
        let mut model = toy::init_model(&c.model, m, schedule, CovMode::Diagonal, base).stage(|| stage("init"))?;
        let mut snaps = Vec::new();
        model
            .fit_observed(&data.images, &toy::train_options(&c.model, base), |model| {
                let e = model.log.len();
                if checkpoints.contains(&e) && snaps.last().map(|(k, _)| *k) != Some(e) {
                    snaps.push((e, toy::evaluate(model, &data, c.model.bins)?));
                }
                Ok(())
            })
            .stage(|| stage("training"))?;
        for (e, eval) in &snaps {
            let x = Some(*e as f64);
            out.row(seed, name, x, "beta", model.config.beta.at(e - 1));
            out.row(seed, name, x, "recon_mse", eval.recon_mse);
            out.row(seed, name, x, "aas", eval.aas);
            out.row(seed, name, x, "mig", eval.mig);
        }
        let (_, last) = snaps.last().expect("final checkpoint");
        finals.push((last.recon_mse, last.aas));
        out.file(format!("metrics/mi_{name}_seed{seed}.csv"), last.mi.to_heatmap_csv());
        out.file(format!("metrics/epochs_{name}_seed{seed}.csv"), epochs_csv(&model.log, None));
        out.json(format!("models/{name}_seed{seed}.json"), &model);
    }
    let f = Finals { high: finals[0], low: finals[1], annealed: finals[2] };
    let sharper = f.annealed.0 < f.high.0;
    let more_aligned = f.annealed.1 > f.low.1;
    out.row(seed, "pattern", None, "recon_better_than_high", sharper as u8 as f64);
    out.row(seed, "pattern", None, "aas_better_than_low", more_aligned as u8 as f64);
    out.row(seed, "pattern", None, "holds", (sharper && more_aligned) as u8 as f64);
    Ok(out)
}
