use nalgebra::DMatrix;
use seamlab::datagen::{plane_rotation, random_orthonormal, random_rotation, sample_covariance, sample_linear_lvm};
use seamlab::linalg::{signed_permutation_distance, svd, Matrix};
use seamlab::lvm::*;
use seamlab::net::{Activation, NetSpec};

fn to_na(m: &Matrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

/// Largest principal angle between two column spans, via nalgebra.
fn max_principal_angle(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    let qa = to_na(a).qr().q();
    let qb = to_na(b).qr().q();
    let s = (qa.transpose() * qb).singular_values();
    s.min().clamp(-1.0, 1.0).acos()
}

fn linear_truth(seed: u64) -> Matrix<f64> {
    let u = random_orthonormal::<f64>(5, 2, seed);
    u.matmul(&Matrix::from_diag(&[2.0, 1.0]))
}

#[test]
fn closed_form_rotated_covariance() {
    let r = plane_rotation::<f64>(2, 0, 1, std::f64::consts::PI / 6.0);
    let cov = r.matmul(&Matrix::from_diag(&[5.0, 2.0])).matmul(&r.transpose());
    let sol = ppca_closed_form(&cov, 2, 1.0).unwrap();
    // 2x2 symmetric eigensolver in closed form
    let (a, b, c) = (cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]);
    let disc = (((a - c) / 2.0).powi(2) + b * b).sqrt();
    let l1 = (a + c) / 2.0 + disc;
    let l2 = (a + c) / 2.0 - disc;
    assert!((sol.lambda_x[0] - l1).abs() < 1e-12 && (sol.lambda_x[1] - l2).abs() < 1e-12);
    let (dist, _, _) = signed_permutation_distance(&sol.u_x.tr_matmul(&r));
    assert!(dist < 1e-12);
    let loadings: Vec<f64> = (0..2).map(|j| seamlab::linalg::norm(&sol.w_star.col(j))).collect();
    assert!((loadings[0] - 2.0).abs() < 1e-12 && (loadings[1] - 1.0).abs() < 1e-12);
}

#[test]
fn closed_form_matches_nalgebra_eigensolver() {
    let x = sample_linear_lvm(&linear_truth(4), 0.3, 500, 9);
    let cov = sample_covariance(&x);
    let sol = ppca_closed_form(&cov, 2, 0.3).unwrap();
    let eig = to_na(&cov).symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for k in 0..2 {
        assert!((sol.lambda_x[k] - vals[k]).abs() < 1e-10);
    }
    assert!(sol.u_x.gram().max_abs_diff(&Matrix::identity(2)) < 1e-12);
    let mut m_inv = sol.w_star.gram().scale(1.0 / 0.3);
    for i in 0..2 {
        m_inv[(i, i)] += 1.0;
    }
    assert!(sol.m_cov.max_abs_diff(&m_inv.inverse().unwrap()) < 1e-8);
}

#[test]
fn posterior_covariance_has_rotated_form() {
    let cov = sample_covariance(&sample_linear_lvm(&linear_truth(1), 0.5, 400, 2));
    let sigma2 = 0.5;
    let sol = ppca_closed_form(&cov, 2, sigma2).unwrap();
    for seed in 0..5 {
        let r = random_rotation::<f64>(2, seed);
        let w = sol.w_star.matmul(&r);
        let q = ppca_posterior(&w, sigma2, &[0.0; 5]).unwrap();
        // σ² Rᵀ Λ⁻¹ R
        let lam_inv = Matrix::from_diag(&sol.lambda_x.iter().map(|l| sigma2 / l).collect::<Vec<_>>());
        let expect = r.transpose().matmul(&lam_inv).matmul(&r);
        assert!(q.cov_matrix().max_abs_diff(&expect) < 1e-10);
        // and the form obtained from the SVD of w
        let t = svd(&w).unwrap();
        let form = t.v.matmul(&Matrix::from_diag(&t.s.iter().map(|s| sigma2 / (s * s + sigma2)).collect::<Vec<_>>()))
            .matmul(&t.v.transpose());
        assert!(q.cov_matrix().max_abs_diff(&form) < 1e-10);
    }
}

#[test]
fn em_fixed_points_and_convergence() {
    let sigma2 = 0.2;
    let x = sample_linear_lvm(&linear_truth(3), sigma2, 2000, 5);
    let sol = ppca_closed_form(&sample_covariance(&x), 2, sigma2).unwrap();
    let step = ppca_em_step(&sol.w_star, sigma2, &x).unwrap();
    assert!(step.max_abs_diff(&sol.w_star) < 1e-8);
    let q = random_rotation::<f64>(2, 77);
    let wq = sol.w_star.matmul(&q);
    assert!(ppca_em_step(&wq, sigma2, &x).unwrap().max_abs_diff(&wq) < 1e-8);

    let mut w = random_orthonormal::<f64>(5, 2, 123);
    for _ in 0..500 {
        w = ppca_em_step(&w, sigma2, &x).unwrap();
    }
    assert!(max_principal_angle(&w, &sol.w_star) < 1e-3);
}

fn linear_model(seed: u64, mode: CovMode, sigma2: f64) -> TrainedModel<f64> {
    let cfg = LvmConfig { d: 2, m: 5, sigma2, beta: BetaSchedule::constant(1.0), cov_mode: mode };
    TrainedModel::init(
        cfg,
        NetSpec::mlp(vec![5, 2], Activation::Identity, seed),
        NetSpec::mlp(vec![2, 5], Activation::Identity, seed + 1),
        None,
    )
    .unwrap()
}

#[test]
fn monte_carlo_elbo_matches_linear_closed_form() {
    let model = linear_model(3, CovMode::Full, 0.4);
    let x = [0.5, -0.2, 1.0, 0.3, -0.7];
    let n_mc = 10_000;
    let t = elbo(&model, &x, n_mc, 1.0, 17).unwrap();

    // E_q ||x - D z - b||² = ||x - D μ - b||² + tr(Dᵀ D Σ)
    let q = model.posterior(&x).unwrap();
    let layer = &model.decoder.layers.layers[0];
    let pred: Vec<f64> = layer.w.mul_vec(&q.mean).iter().zip(&layer.b).map(|(a, b)| a + b).collect();
    let resid: f64 = x.iter().zip(&pred).map(|(a, b)| (a - b).powi(2)).sum();
    let tr = layer.w.gram().matmul(&q.cov_matrix()).trace();
    let s2 = 0.4;
    let norm = 2.5 * (2.0 * std::f64::consts::PI * s2).ln();
    let exact_recon = -(resid + tr) / (2.0 * s2) - norm;

    // standard error from per-draw reconstruction values
    let l = q.scale_factor().unwrap();
    let mut rng = seamlab::datagen::rng(99);
    let draws: Vec<f64> = (0..n_mc)
        .map(|_| {
            let e: Vec<f64> = seamlab::datagen::gaussian_vec(&mut rng, 2);
            let z: Vec<f64> = q.mean.iter().zip(l.mul_vec(&e)).map(|(m, v)| m + v).collect();
            let y = model.decoder.forward(&z).unwrap();
            -x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (2.0 * s2) - norm
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / n_mc as f64;
    let sd = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_mc - 1) as f64).sqrt();
    let se = sd / (n_mc as f64).sqrt();
    assert!((t.recon - exact_recon).abs() < 3.0 * se, "{} vs {} (se {se})", t.recon, exact_recon);
    let exact_kl = q.kl_to_standard_normal().unwrap();
    assert!((t.total - (exact_recon - exact_kl)).abs() < 3.0 * se);
}

#[test]
fn kl_closed_form_matches_monte_carlo() {
    let l = Matrix::from_rows(&[vec![0.8, 0.0], vec![0.3, 0.5]]).unwrap();
    let q = GaussianPosterior::new(vec![0.4, -1.1], Covariance::Full(l.matmul(&l.transpose()))).unwrap();
    let n = 10_000;
    let mut rng = seamlab::datagen::rng(4);
    let vals: Vec<f64> = (0..n)
        .map(|_| {
            let z = q.sample(&mut rng).unwrap();
            let log_p = -0.5 * (z[0] * z[0] + z[1] * z[1]) - (2.0 * std::f64::consts::PI).ln();
            q.log_density(&z).unwrap() - log_p
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / n as f64;
    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let kl = q.kl_to_standard_normal().unwrap();
    assert!((mean - kl).abs() < 3.0 * sd / (n as f64).sqrt(), "{mean} vs {kl}");
}

fn nonlinear_model(seed: u64, mode: CovMode, amortized: bool) -> TrainedModel<f64> {
    let cfg = LvmConfig { d: 3, m: 6, sigma2: 0.3, beta: BetaSchedule::constant(1.0), cov_mode: mode };
    let k = mode.n_params(3);
    TrainedModel::init(
        cfg,
        NetSpec::mlp(vec![6, 8, 3], Activation::Tanh, seed),
        NetSpec::mlp(vec![3, 8, 6], Activation::Softplus, seed + 1),
        amortized.then(|| NetSpec::mlp(vec![6, 5, k], Activation::Tanh, seed + 2)),
    )
    .unwrap()
}

fn batch(seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seamlab::datagen::rng(seed);
    (0..4).map(|_| seamlab::datagen::gaussian_vec(&mut rng, 6)).collect()
}

/// Perturbs the model along a flat direction.
fn shifted(model: &TrainedModel<f64>, k: usize, h: f64) -> TrainedModel<f64> {
    let mut dir = ModelGrads::zeros_like(model);
    let mut flat = vec![0.0; dir.to_flat().len()];
    flat[k] = 1.0;
    dir.set_flat(&flat);
    let mut out = model.clone();
    out.apply_step(h, &dir);
    out
}

#[test]
fn elbo_gradient_matches_finite_differences() {
    for (mode, amortized) in [(CovMode::Diagonal, false), (CovMode::Full, false), (CovMode::Diagonal, true), (CovMode::Full, true)] {
        let model = nonlinear_model(5, mode, amortized);
        let xs = batch(8);
        let (_, g) = elbo_gradient(&model, &xs, 1.5, 0.3, 2, 21).unwrap();
        let flat = g.to_flat();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..flat.len() {
            let up = elbo_gradient(&shifted(&model, k, h), &xs, 1.5, 0.3, 2, 21).unwrap().0;
            let dn = elbo_gradient(&shifted(&model, k, -h), &xs, 1.5, 0.3, 2, 21).unwrap().0;
            let fd = (up - dn) / (2.0 * h);
            worst = worst.max((fd - flat[k]).abs() / (1.0 + flat[k].abs().max(fd.abs())));
        }
        assert!(worst < 1e-4, "{mode:?}/{amortized}: {worst}");
    }
}

#[test]
fn beta_acts_as_likelihood_temperature() {
    for seed in 0..3 {
        let model = nonlinear_model(seed, CovMode::Diagonal, true);
        let xs = batch(seed + 100);
        for beta in [0.5, 2.0, 8.0] {
            let (_, a) = elbo_gradient(&model, &xs, beta, 0.3, 1, seed).unwrap();
            let (_, b) = elbo_gradient(&model, &xs, 1.0, beta * 0.3, 1, seed).unwrap();
            let (a, b) = (a.to_flat(), b.to_flat());
            let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let err = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x / beta - y).abs()));
            assert!(err <= 1e-8 * scale.max(1.0), "seed {seed} beta {beta}: {err}");
        }
    }
}

#[test]
fn training_is_deterministic_and_serializes() {
    let truth = linear_truth(2);
    let x = sample_linear_lvm(&truth, 0.1, 200, 3);
    let cfg = LvmConfig { d: 2, m: 5, sigma2: 0.1, beta: BetaSchedule::constant(1.0), cov_mode: CovMode::Full };
    let run = || {
        train_gaussian_vae(
            cfg.clone(),
            &x,
            NetSpec::mlp(vec![5, 4, 2], Activation::Tanh, 1),
            NetSpec::mlp(vec![2, 4, 5], Activation::Tanh, 2),
            Some(NetSpec::mlp(vec![5, 3], Activation::Tanh, 3)),
            &TrainOptions::new(3, 0.01, 7),
        )
        .unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    assert_eq!(a.log.len(), 3);
    let json = serde_json::to_string(&a).unwrap();
    let back: TrainedModel<f64> = serde_json::from_str(&json).unwrap();
    assert_eq!(a, back);
}

#[test]
fn divergence_reports_epoch() {
    let x = sample_linear_lvm(&linear_truth(2), 0.1, 50, 3).scale(1e3);
    let cfg = LvmConfig { d: 2, m: 5, sigma2: 1e-4, beta: BetaSchedule::constant(1.0), cov_mode: CovMode::Diagonal };
    let err = train_gaussian_vae::<f64>(
        cfg,
        &x,
        NetSpec::mlp(vec![5, 2], Activation::Identity, 1),
        NetSpec::mlp(vec![2, 5], Activation::Identity, 2),
        None,
        &TrainOptions::new(20, 10.0, 7),
    )
    .unwrap_err();
    assert!(matches!(err, seamlab::Error::NumericalFailure { epoch: Some(_), .. }), "{err:?}");
}

fn train_linear(seed: u64, mode: CovMode) -> (TrainedModel<f64>, f64) {
    let sigma2 = 0.25;
    let x = sample_linear_lvm(&linear_truth(seed), sigma2, 500, seed + 10);
    let mut model = linear_model(seed + 20, mode, sigma2);
    let mut opts = TrainOptions::new(150, 0.002, seed);
    opts.batch_size = 50;
    model.fit(&x, &opts).unwrap();
    // full-batch phases with more draws to settle the slow rotational mode
    for (k, (epochs, lr, n_mc)) in [(400, 0.01, 16), (100, 0.002, 64)].into_iter().enumerate() {
        let mut fine = TrainOptions::new(epochs, lr, seed + 1 + k as u64);
        fine.batch_size = 500;
        fine.n_mc = n_mc;
        model.fit(&x, &fine).unwrap();
    }
    let dec = &model.decoder.layers.layers[0].w;
    let (dist, _, _) = signed_permutation_distance(&svd(dec).unwrap().v);
    (model, dist)
}

#[test]
fn diagonal_linear_vae_breaks_rotational_symmetry() {
    let (model, dist) = train_linear(1, CovMode::Diagonal);
    assert_eq!(model.log.len(), 650);
    assert!(dist < 1e-2, "V distance {dist}");
    // fixed point of the posterior precision
    let d = &model.decoder.layers.layers[0].w;
    let mut expect = d.gram().scale(1.0 / model.config.sigma2);
    for i in 0..2 {
        expect[(i, i)] += 1.0;
    }
    let q = model.posterior(&[0.0; 5]).unwrap();
    let prec = q.cov_matrix().inverse().unwrap();
    let rel = prec.max_abs_diff(&expect) / expect.max_abs();
    assert!(rel < 1e-3, "precision mismatch {rel}");
}

#[test]
fn full_covariance_linear_vae_keeps_rotation() {
    for seed in 0..5 {
        let (_, dist) = train_linear(seed, CovMode::Full);
        assert!(dist > 0.1, "seed {seed}: V distance {dist}");
    }
}
