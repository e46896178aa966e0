use proptest::prelude::*;
use seamlab::datagen::{
    banded_phis, gaussian_vec, make_c1c2_generator, make_entangled_control, random_orthonormal, random_rotation, rng,
    MonotoneMap,
};
use seamlab::geometry::*;
use seamlab::linalg::{dot, norm, sub_vec, Matrix, DEFAULT_GAP_TOL};
use seamlab::metrics::c1_score;
use seamlab::net::{Activation, Net, NetSpec};
use seamlab::Error;

const LN_2PI: f64 = 1.8378770664093453;

fn log_normal(t: f64) -> f64 {
    -0.5 * (t * t + LN_2PI)
}

fn cubic_pair() -> Vec<MonotoneMap> {
    vec![MonotoneMap::cubic(), MonotoneMap::Poly { terms: vec![(3, 1.0), (1, 3.0)] }]
}

fn mlp(seed: u64) -> Net<f64> {
    Net::new(NetSpec::mlp(vec![2, 8, 5], Activation::Tanh, seed)).unwrap()
}

#[test]
fn regular_set_examples() {
    let lin = LinearGenerator::new(Matrix::from_diag_rect(3, &[2.0, 1.0])).unwrap();
    let equal = LinearGenerator::new(Matrix::from_diag_rect(3, &[1.0, 1.0])).unwrap();
    for seed in 0..10 {
        let z = gaussian_vec(&mut rng(seed), 2);
        assert!(regular_check(&lin, &z, DEFAULT_GAP_TOL).in_regular_set);
        assert!(!regular_check(&equal, &z, DEFAULT_GAP_TOL).in_regular_set);
    }
    let g = make_c1c2_generator(random_orthonormal::<f64>(4, 2, 1), vec![MonotoneMap::cubic(); 2]).unwrap();
    assert!(!regular_check(&g, &[0.0, 0.0], DEFAULT_GAP_TOL).in_regular_set);
    assert!(regular_check(&g, &[0.3, -1.2], DEFAULT_GAP_TOL).in_regular_set);
}

proptest! {
    #[test]
    fn constructed_generators_are_regular_iff_derivatives_differ(z in prop::collection::vec(-2.0f64..2.0, 3), tie in any::<bool>()) {
        let mut z = z;
        if tie {
            z[2] = -z[0];
        }
        let g = make_c1c2_generator(random_orthonormal::<f64>(5, 3, 7), vec![MonotoneMap::cubic(); 3]).unwrap();
        let s: Vec<f64> = z.iter().map(|t| t * t + 1.0).collect();
        let smax = s.iter().copied().fold(0.0, f64::max);
        let mut gap = f64::INFINITY;
        for i in 0..3 {
            for j in 0..i {
                gap = gap.min((s[i] - s[j]).abs() / smax);
            }
        }
        prop_assert_eq!(regular_check(&g, &z, DEFAULT_GAP_TOL).in_regular_set, gap > DEFAULT_GAP_TOL);
    }

    #[test]
    fn density_factorises_on_constructed_family(seed in 0u64..500) {
        let g = make_c1c2_generator(random_orthonormal::<f64>(6, 3, seed), banded_phis(3, &[0.2, 0.5, 0.9])).unwrap();
        let z = gaussian_vec(&mut rng(seed + 1), 3);
        let d = manifold_density(&g, &z, &StandardNormal).unwrap();
        prop_assert!((d.log_density - d.log_density_factorised).abs() < 1e-10);
    }
}

#[test]
fn density_examples() {
    let id = LinearGenerator::new(Matrix::from_diag_rect(4, &[1.0, 2.0, 3.0])).unwrap();
    let d = manifold_density(&id, &[0.0, 0.0, 0.0], &StandardNormal).unwrap();
    assert!((d.log_density - (-1.5 * LN_2PI - 6.0f64.ln())).abs() < 1e-12);

    let lin = LinearGenerator::new(Matrix::from_diag_rect(3, &[2.0, 1.0])).unwrap();
    let d = manifold_density(&lin, &[0.0, 0.0], &StandardNormal).unwrap();
    assert!((d.log_density - (-(2.0f64.ln()) - LN_2PI)).abs() < 1e-12);

    let phis = vec![MonotoneMap::cubic(), MonotoneMap::Poly { terms: vec![(3, 1.0), (1, 2.0)] }];
    let g = make_c1c2_generator(random_orthonormal::<f64>(4, 2, 3), phis).unwrap();
    let d = manifold_density(&g, &[1.0, -1.0], &StandardNormal).unwrap();
    // s = (φ'_2(-1), φ'_1(1)) = (3, 2) in singular order
    assert_eq!(d.axes, vec![1, 0]);
    assert!((d.factor_logs[0] - (log_normal(-1.0) - 3.0f64.ln())).abs() < 1e-12);
    assert!((d.factor_logs[1] - (log_normal(1.0) - 2.0f64.ln())).abs() < 1e-12);
}

#[test]
fn rotated_control_keeps_density() {
    let g = make_c1c2_generator(random_orthonormal::<f64>(5, 3, 2), banded_phis(3, &[0.1, 0.4, 0.7])).unwrap();
    let r = random_rotation::<f64>(3, 9);
    let control = make_entangled_control(g.clone(), r.clone()).unwrap();
    for seed in 0..10 {
        let z = gaussian_vec(&mut rng(seed), 3);
        let a = manifold_density(&control, &z, &StandardNormal).unwrap();
        let b = manifold_density(&g, &r.mul_vec(&z), &StandardNormal).unwrap();
        assert!((a.log_density - b.log_density).abs() < 1e-10);
    }
}

#[test]
fn sv_paths_on_constructed_family_are_axis_aligned() {
    let g = make_c1c2_generator(random_orthonormal::<f64>(5, 2, 4), cubic_pair()).unwrap();
    let z0 = [0.2, 0.5];
    for i in 0..2 {
        let tr = integrate_sv_path(&g, &z0, i, (-0.5, 0.5), 1e-2, DEFAULT_GAP_TOL).unwrap();
        assert!(tr.exit.is_empty());
        for z in &tr.z {
            for j in 0..2 {
                if j != tr.axis {
                    assert!((z[j] - z0[j]).abs() < 1e-8);
                }
            }
        }
    }
}

#[test]
fn sv_paths_of_rotated_control_follow_rotated_axes() {
    let g = make_c1c2_generator(random_orthonormal::<f64>(5, 2, 4), cubic_pair()).unwrap();
    let r = random_rotation::<f64>(2, 3);
    let control = make_entangled_control(g, r.clone()).unwrap();
    let z0 = r.transpose().mul_vec(&[0.2, 0.5]);
    let rt = r.transpose();
    for i in 0..2 {
        let tr = integrate_sv_path(&control, &z0, i, (-0.5, 0.5), 1e-2, DEFAULT_GAP_TOL).unwrap();
        // the path moves along some column of Rᵀ
        let dir = sub_vec(tr.z.last().unwrap(), &tr.z[0]);
        let dir: Vec<f64> = dir.iter().map(|v| v / norm(&dir)).collect();
        let col = (0..2).map(|c| rt.col(c)).max_by(|a, b| dot(a, &dir).abs().partial_cmp(&dot(b, &dir).abs()).unwrap());
        let col = col.unwrap();
        for z in &tr.z {
            let off = sub_vec(z, &z0);
            let along = dot(&off, &col);
            let perp = sub_vec(&off, &col.iter().map(|c| c * along).collect::<Vec<_>>());
            assert!(norm(&perp) < 1e-6);
        }
    }
}

#[test]
fn seam_coordinate_is_antiderivative_of_phi_prime() {
    let phis = cubic_pair();
    let g = make_c1c2_generator(random_orthonormal::<f64>(5, 2, 6), phis.clone()).unwrap();
    let z0 = [0.2, 0.5];
    for i in 0..2 {
        let tr = trace_seam(&g, &z0, i, (-0.5, 0.5), 1e-2, DEFAULT_GAP_TOL).unwrap();
        let a = tr.axis;
        for k in 0..tr.len() {
            let za = tr.z[k][a];
            let expect = tr.orientation * (phis[a].value(za) - phis[a].value(z0[a]));
            assert!((tr.seam_coord[k] - expect).abs() < 1e-6, "node {k}");
        }
        assert!(tr.seam_coord.windows(2).all(|w| w[1] > w[0]));
        assert!(tr.v_vec.windows(2).all(|w| dot(&w[0], &w[1]) > 0.0));
        assert!(tr.max_tangent_angle < 10.0 * 1e-2);
    }
}

#[test]
fn reversed_traversal_visits_the_same_points() {
    let g = mlp(3);
    let z0 = [0.3, -0.2];
    let a = 0.6;
    let tr = trace_seam(&g, &z0, 0, (-a, a), 1e-2, DEFAULT_GAP_TOL).unwrap();
    assert!(tr.exit.is_empty());
    let end = tr.z.last().unwrap().clone();
    let canonical = jacobian_svd(&g, &end).unwrap().v.col(0);
    let back_span = if dot(&canonical, tr.v_vec.last().unwrap()) > 0.0 { (-2.0 * a, 0.0) } else { (0.0, 2.0 * a) };
    let rev = trace_seam(&g, &end, 0, back_span, 1e-2, DEFAULT_GAP_TOL).unwrap();
    assert_eq!(rev.len(), tr.len());
    let mut worst: f64 = 0.0;
    for x in &tr.x {
        let nearest = rev.x.iter().map(|y| norm(&sub_vec(x, y))).fold(f64::INFINITY, f64::min);
        worst = worst.max(nearest);
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn rk4_converges_at_fourth_order() {
    let g = mlp(5);
    let z0 = [0.1, 0.4];
    let end = |h: f64| integrate_sv_path(&g, &z0, 0, (0.0, 0.8), h, DEFAULT_GAP_TOL).unwrap().z.last().unwrap().clone();
    let reference = end(0.8 / 256.0);
    let e1 = norm(&sub_vec(&end(0.8 / 8.0), &reference));
    let e2 = norm(&sub_vec(&end(0.8 / 16.0), &reference));
    assert!(e1 > 0.0 && e1 / e2 >= 8.0, "{e1:e} / {e2:e}");
}

#[test]
fn axis_aligned_paths_iff_c1() {
    let constructed = make_c1c2_generator(random_orthonormal::<f64>(5, 2, 8), cubic_pair()).unwrap();
    let control = make_entangled_control(constructed.clone(), random_rotation(2, 5)).unwrap();
    let net = mlp(7);
    let gens: Vec<Box<dyn Generator<f64>>> = vec![Box::new(constructed), Box::new(control), Box::new(net)];
    for (k, g) in gens.iter().enumerate() {
        let z0 = [0.2, 0.5];
        let tr = integrate_sv_path(g, &z0, 0, (-0.3, 0.3), 1e-2, DEFAULT_GAP_TOL).unwrap();
        let a = tr.axis;
        let drift = tr.z.iter().map(|z| (z[1 - a] - z0[1 - a]).abs()).fold(0.0, f64::max);
        let c1 = tr.z.iter().map(|z| c1_score(g, z).unwrap()).fold(0.0, f64::max);
        assert_eq!(drift < 1e-6, c1 < 1e-6, "generator {k}: drift {drift:e}, c1 {c1:e}");
    }
}

#[test]
fn traversals_follow_seams_only_under_c1() {
    let g = make_c1c2_generator(random_orthonormal::<f64>(6, 3, 1), banded_phis(3, &[0.3, 0.6, 0.1])).unwrap();
    let control = make_entangled_control(g.clone(), random_rotation(3, 2)).unwrap();
    let z0 = [0.4, -0.3, 0.8];
    for i in 0..3 {
        let seam = trace_seam(&g, &z0, i, (-1.0, 1.0), 1e-2, DEFAULT_GAP_TOL).unwrap();
        let trav = axis_traversal_image(&g, &z0, seam.axis, (-1.0, 1.0), 1e-2).unwrap();
        assert!(max_node_distance(&seam, &trav) < 1e-3);

        let seam = trace_seam(&control, &z0, i, (-1.0, 1.0), 1e-2, DEFAULT_GAP_TOL).unwrap();
        let trav = axis_traversal_image(&control, &z0, seam.axis, (-1.0, 1.0), 1e-2).unwrap();
        assert!(max_node_distance(&seam, &trav) > 0.1);
    }
    let d = random_orthonormal::<f64>(4, 2, 3).matmul(&Matrix::from_diag(&[2.0, 0.5]));
    let lin = LinearGenerator::new(d.clone()).unwrap();
    let trav = axis_traversal_image(&lin, &[0.1, 0.2], 1, (-0.5, 0.5), 0.1).unwrap();
    let x0 = lin.value(&[0.1, 0.2]).unwrap();
    for (t, x) in trav.t.iter().zip(&trav.x) {
        let expect: Vec<f64> = x0.iter().zip(d.col(1)).map(|(a, c)| a + t * c).collect();
        assert!(norm(&sub_vec(x, &expect)) < 1e-12);
    }
}

#[test]
fn seam_densities() {
    let d = random_orthonormal::<f64>(4, 2, 5).matmul(&Matrix::from_diag(&[2.0, 0.5]));
    let lin = LinearGenerator::new(d).unwrap();
    let tr = trace_seam(&lin, &[0.0, 0.0], 0, (-6.0, 6.0), 1e-2, DEFAULT_GAP_TOL).unwrap();
    let profile = seam_density_profile(&tr, &StandardNormal);
    for &(u, f) in &profile {
        let expect = (-0.5 * u * u / 4.0).exp() / (2.0 * (2.0 * std::f64::consts::PI).sqrt());
        assert!((f - expect).abs() < 1e-12);
    }
    assert!((seam_density_mass(&tr, &profile) - 1.0).abs() < 1e-4);

    let phis = banded_phis(2, &[0.5, 0.5]);
    let g = make_c1c2_generator(random_orthonormal::<f64>(4, 2, 6), phis.clone()).unwrap();
    let z0 = [0.0, 0.0];
    for i in 0..2 {
        let tr = trace_seam(&g, &z0, i, (-6.0, 6.0), 1e-2, DEFAULT_GAP_TOL).unwrap();
        let profile = seam_density_profile(&tr, &StandardNormal);
        let a = tr.axis;
        for (k, &(_, f)) in profile.iter().enumerate() {
            let za = tr.z[k][a];
            assert!((f - log_normal(za).exp() / phis[a].deriv(za)).abs() < 1e-12);
        }
        assert!((seam_density_mass(&tr, &profile) - 1.0).abs() < 1e-4);
    }
}

#[test]
fn irregular_start_is_rejected() {
    let g = make_c1c2_generator(random_orthonormal::<f64>(4, 2, 1), vec![MonotoneMap::cubic(); 2]).unwrap();
    let err = trace_seam(&g, &[0.5, -0.5], 0, (-0.1, 0.1), 1e-2, DEFAULT_GAP_TOL).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)));
}

#[test]
fn crossing_truncates_instead_of_failing() {
    let g = make_c1c2_generator(random_orthonormal::<f64>(4, 2, 1), vec![MonotoneMap::cubic(); 2]).unwrap();
    // φ'_1(z_1) = φ'_2(z_2) when |z_1| = |z_2| = 0.5
    let tr = integrate_sv_path(&g, &[0.0, 0.5], 0, (-1.0, 1.0), 1e-2, DEFAULT_GAP_TOL).unwrap();
    assert!(!tr.exit.is_empty());
    assert!(tr.len() < 201);
}
