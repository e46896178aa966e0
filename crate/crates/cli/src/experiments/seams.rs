//! Axis traversals against traced seams on a C1-C2 generator and its rotated control.

use seamlab::datagen::{banded_phis, gaussian_vec, make_c1c2_generator, make_entangled_control, random_orthonormal, random_rotation, rng};
use seamlab::geometry::{axis_traversal_image, max_node_distance, trace_seam, Generator};
use seamlab::linalg::DEFAULT_GAP_TOL;
use seamlab::metrics::c1_score;

use super::{sub_seed, SeedOutput};
use crate::config::SeamGeometryConfig;
use crate::error::{Result, StageContext};

/// Every axis of `g` from `z0`: writes both paths and returns the node distances.
fn compare_axes(
    out: &mut SeedOutput,
    g: &dyn Generator<f64>,
    name: &str,
    z0: &[f64],
    c: &SeamGeometryConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let span = (-c.half_span, c.half_span);
    let mut dists = Vec::new();
    for i in 0..z0.len() {
        let stage = || format!("seed {seed}: {name} seam {i}");
        let seam = trace_seam(g, z0, i, span, c.step, DEFAULT_GAP_TOL).stage(stage)?;
        let traversal = axis_traversal_image(g, z0, seam.axis, span, c.step).stage(stage)?;
        let dist = max_node_distance(&seam, &traversal);
        let x = Some(i as f64);
        out.row(seed, name, x, "matched_axis", seam.axis as f64);
        out.row(seed, name, x, "max_node_distance", dist);
        out.row(seed, name, x, "seam_tangent_angle", seam.max_tangent_angle);
        out.file(format!("traces/{name}_seam{i}_seed{seed}.csv"), seam.to_csv());
        out.file(format!("traces/{name}_traversal{i}_seed{seed}.csv"), traversal.to_csv());
        dists.push(dist);
    }
    let c1 = c1_score(g, z0).stage(|| format!("seed {seed}: {name} c1"))?;
    out.row(seed, name, None, "c1", c1);
    Ok(dists)
}

pub(super) fn run(c: &SeamGeometryConfig, seed: u64) -> Result<SeedOutput> {
    let mut out = SeedOutput::default();
    let d = c.jitter.len();
    let a = random_orthonormal::<f64>(c.m, d, sub_seed(seed, 1));
    let g = make_c1c2_generator(a, banded_phis(d, &c.jitter)).stage(|| format!("seed {seed}: generator"))?;
    let control = make_entangled_control(g.clone(), random_rotation(d, sub_seed(seed, 2)))
        .stage(|| format!("seed {seed}: control"))?;
    out.json(format!("models/a-phi_seed{seed}.json"), &g);
    out.json(format!("models/control_seed{seed}.json"), &control);
    let z0: Vec<f64> = gaussian_vec::<f64>(&mut rng(sub_seed(seed, 3)), d).iter().map(|v| v * c.start_scale).collect();

    let aligned = compare_axes(&mut out, &g, "a-phi", &z0, c, seed)?;
    let rotated = compare_axes(&mut out, &control, "control", &z0, c, seed)?;
    let worst_aligned = aligned.iter().copied().fold(0.0, f64::max);
    let best_rotated = rotated.iter().copied().fold(f64::INFINITY, f64::min);
    out.row(seed, "summary", None, "a_phi_worst_distance", worst_aligned);
    out.row(seed, "summary", None, "control_best_distance", best_rotated);
    out.row(seed, "summary", None, "separated", (worst_aligned < 1e-3 && best_rotated > 0.1) as u8 as f64);
    Ok(out)
}
