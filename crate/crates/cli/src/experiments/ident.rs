//! Seam decompositions of a generator and an axis-wise reparameterization of it,
//! plus intrinsic seams and a rotated control.

use seamlab::datagen::{
    banded_phis, gaussian_vec, make_c1c2_generator, make_entangled_control, random_orthonormal, random_rotation, rng,
    PulledBackPrior, Reparameterized,
};
use seamlab::geometry::{jacobian_svd, StandardNormal};
use seamlab::identify::{align_ps, compare_seam_decompositions, intrinsic_seams, ProbePair};

use super::{sub_seed, SeedOutput};
use crate::config::IdentifiabilityConfig;
use crate::error::{Result, StageContext};

pub(super) fn run(c: &IdentifiabilityConfig, seed: u64) -> Result<SeedOutput> {
    let mut out = SeedOutput::default();
    let stage = |what: &str| format!("seed {seed}: {what}");
    let d = c.jitter.len();
    let a = random_orthonormal::<f64>(c.m, d, sub_seed(seed, 1));
    let g = make_c1c2_generator(a, banded_phis(d, &c.jitter)).stage(|| stage("generator"))?;
    let h = Reparameterized::new(g.clone(), c.psi.clone()).stage(|| stage("reparameterization"))?;
    out.json(format!("models/generator_seed{seed}.json"), &h);
    let prior_h = PulledBackPrior { base: StandardNormal, psi: c.psi.clone() };
    let mut r = rng(sub_seed(seed, 2));
    let probes: Vec<ProbePair<f64>> = (0..c.n_probes)
        .map(|_| {
            let z_h: Vec<f64> = gaussian_vec(&mut r, d);
            ProbePair { z_g: h.apply(&z_h), z_h }
        })
        .collect();

    let cmp = compare_seam_decompositions(&g, &h, &StandardNormal, &prior_h, &probes, Default::default())
        .stage(|| stage("comparison"))?;
    out.row(seed, "compare", None, "residual", cmp.alignment.residual);
    out.row(seed, "compare", None, "max_factor_deviation", cmp.max_factor_deviation);
    let identity = cmp.alignment.permutation.iter().enumerate().all(|(i, &p)| p == i);
    out.row(seed, "compare", None, "identity_permutation", identity as u8 as f64);
    out.json(format!("models/comparison_seed{seed}.json"), &cmp);

    let mut worst: f64 = 0.0;
    for p in &probes {
        let seams = intrinsic_seams(&g, &StandardNormal, &p.z_g, c.fd_step).stage(|| stage("intrinsic seams"))?;
        let u = jacobian_svd(&g, &p.z_g).stage(|| stage("jacobian"))?.u;
        worst = worst.max(align_ps(&seams, &u).stage(|| stage("seam alignment"))?.residual);
    }
    out.row(seed, "intrinsic", None, "max_residual", worst);

    let rot = random_rotation::<f64>(d, sub_seed(seed, 3));
    let control = make_entangled_control(g.clone(), rot.clone()).stage(|| stage("control"))?;
    let control_probes: Vec<ProbePair<f64>> =
        probes.iter().map(|p| ProbePair { z_g: rot.mul_vec(&p.z_g), z_h: p.z_g.clone() }).collect();
    let rejected = matches!(
        compare_seam_decompositions(&g, &control, &StandardNormal, &StandardNormal, &control_probes, Default::default()),
        Err(seamlab::Error::PreconditionFailed(_))
    );
    out.row(seed, "control", None, "rejected", rejected as u8 as f64);
    Ok(out)
}
