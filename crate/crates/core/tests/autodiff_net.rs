use proptest::prelude::*;
use seamlab::datagen::{gaussian_vec, rng};
use seamlab::linalg::{dot, Matrix};
use seamlab::net::{Activation, Net, NetParams, NetSpec};

fn probe(seed: u64, n: usize) -> Vec<f64> {
    gaussian_vec(&mut rng(seed), n)
}

/// Seeded net with perturbed (non-zero) biases.
fn corpus_net(seed: u64) -> Net<f64> {
    let act = if seed % 2 == 0 { Activation::Tanh } else { Activation::Softplus };
    let widths = if seed % 3 == 0 { vec![3, 6, 5, 4] } else { vec![2, 7, 5] };
    let mut net = Net::new(NetSpec::mlp(widths, act, seed)).unwrap();
    let flat: Vec<f64> =
        net.layers.to_flat().iter().zip(probe(seed + 1000, net.layers.len())).map(|(w, e)| w + 0.1 * e).collect();
    net.layers.set_flat(&flat);
    net
}

/// Straight-line re-evaluation of the network.
fn reference_forward(net: &Net<f64>, z: &[f64]) -> Vec<f64> {
    let mut a = z.to_vec();
    for (layer, act) in net.layers.layers.iter().zip(&net.spec.activations) {
        let mut next = Vec::new();
        for i in 0..layer.w.rows() {
            let mut h = layer.b[i];
            for (j, &aj) in a.iter().enumerate() {
                h += layer.w[(i, j)] * aj;
            }
            next.push(match act {
                Activation::Tanh => h.tanh(),
                Activation::Softplus => (1.0 + h.exp()).ln(),
                Activation::Identity => h,
            });
        }
        a = next;
    }
    a
}

#[test]
fn forward_matches_reference() {
    for seed in 0..8 {
        let net = corpus_net(seed);
        let z = probe(seed, net.input_dim());
        let out = net.forward(&z).unwrap();
        for (a, b) in out.iter().zip(reference_forward(&net, &z)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn least_squares_gradient_of_linear_net() {
    let w = Matrix::new(3, 2, probe(1, 6)).unwrap();
    let net = Net::linear(w.clone(), vec![0.0; 3]).unwrap();
    let z = vec![0.7, -1.2];
    let x = vec![0.3, 0.1, -0.4];
    let (_, g) = net
        .param_gradient(&[z.clone()], |_, out| {
            let r: Vec<f64> = out.iter().zip(&x).map(|(o, t)| o - t).collect();
            (dot(&r, &r), r.iter().map(|v| 2.0 * v).collect())
        })
        .unwrap();
    let r: Vec<f64> = w.mul_vec(&z).iter().zip(&x).map(|(o, t)| o - t).collect();
    for i in 0..3 {
        for j in 0..2 {
            assert!((g.layers[0].w[(i, j)] - 2.0 * r[i] * z[j]).abs() < 1e-14);
        }
        assert!((g.layers[0].b[i] - 2.0 * r[i]).abs() < 1e-14);
    }
}

fn sq_loss(net: &Net<f64>, batch: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
    batch
        .iter()
        .zip(targets)
        .map(|(z, x)| net.forward(z).unwrap().iter().zip(x).map(|(o, t)| 0.5 * (o - t) * (o - t)).sum::<f64>())
        .sum()
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

#[test]
fn parameter_gradients_match_central_differences() {
    let h = 1e-5;
    for seed in 0..6 {
        let net = corpus_net(seed);
        let batch: Vec<Vec<f64>> = (0..4).map(|k| probe(seed * 10 + k, net.input_dim())).collect();
        let targets: Vec<Vec<f64>> = (0..4).map(|k| probe(seed * 10 + k + 5, net.output_dim())).collect();
        let (value, grads) = net
            .param_gradient(&batch, |k, out| {
                let r: Vec<f64> = out.iter().zip(&targets[k]).map(|(o, t)| o - t).collect();
                (0.5 * dot(&r, &r), r)
            })
            .unwrap();
        assert!((value - sq_loss(&net, &batch, &targets)).abs() < 1e-12);
        let theta = net.layers.to_flat();
        let analytic = grads.to_flat();
        let mut probe_net = net.clone();
        for k in 0..theta.len() {
            let mut t = theta.clone();
            t[k] += h;
            probe_net.layers.set_flat(&t);
            let up = sq_loss(&probe_net, &batch, &targets);
            t[k] -= 2.0 * h;
            probe_net.layers.set_flat(&t);
            let down = sq_loss(&probe_net, &batch, &targets);
            let fd = (up - down) / (2.0 * h);
            assert!(relative_error(analytic[k], fd) < 1e-5, "seed {seed} param {k}: {} vs {fd}", analytic[k]);
        }
    }
}

#[test]
fn jacobian_matches_central_differences_and_reverse_mode() {
    let h = 1e-6;
    for seed in 0..8 {
        let net = corpus_net(seed);
        let z = probe(seed + 50, net.input_dim());
        let j = net.jacobian(&z).unwrap();
        for c in 0..net.input_dim() {
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[c] += h;
            zm[c] -= h;
            let (fp, fm) = (net.forward(&zp).unwrap(), net.forward(&zm).unwrap());
            for r in 0..net.output_dim() {
                assert!((j[(r, c)] - (fp[r] - fm[r]) / (2.0 * h)).abs() < 1e-6);
            }
        }
        for r in 0..net.output_dim() {
            let mut e = vec![0.0; net.output_dim()];
            e[r] = 1.0;
            let row = net.vjp(&z, &e).unwrap();
            for c in 0..net.input_dim() {
                assert!((row[c] - j[(r, c)]).abs() < 1e-13);
            }
        }
    }
}

#[test]
fn elementwise_tanh_jacobian_and_hessian() {
    let spec = NetSpec { widths: vec![3, 3], activations: vec![Activation::Tanh], seed: 0 };
    let net = Net::from_params(
        spec,
        NetParams { layers: vec![seamlab::net::Layer { w: Matrix::identity(3), b: vec![0.0; 3] }] },
    )
    .unwrap();
    let z = [0.3, -1.1, 2.0];
    let j = net.jacobian(&z).unwrap();
    let expect: Vec<f64> = z.iter().map(|v: &f64| 1.0 - v.tanh().powi(2)).collect();
    assert!(j.max_abs_diff(&Matrix::from_diag(&expect)) < 1e-15);

    let scalar = Net::from_params(
        NetSpec { widths: vec![1, 1], activations: vec![Activation::Tanh], seed: 0 },
        NetParams { layers: vec![seamlab::net::Layer { w: Matrix::identity(1), b: vec![0.0] }] },
    )
    .unwrap();
    let t = 0.8f64.tanh();
    let h = scalar.directed_hessian(&[0.8], &[1.0]).unwrap();
    assert!((h[(0, 0)] + 2.0 * t * (1.0 - t * t)).abs() < 1e-15);
}

#[test]
fn directed_hessian_matches_differences_of_jacobian() {
    let h = 1e-5;
    for seed in 0..8 {
        let net = corpus_net(seed);
        let z = probe(seed + 70, net.input_dim());
        let r = probe(seed + 80, net.output_dim());
        let hess = net.directed_hessian(&z, &r).unwrap();
        for c in 0..net.input_dim() {
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[c] += h;
            zm[c] -= h;
            let gp = net.jacobian(&zp).unwrap().tr_mul_vec(&r);
            let gm = net.jacobian(&zm).unwrap().tr_mul_vec(&r);
            for a in 0..net.input_dim() {
                assert!((hess[(a, c)] - (gp[a] - gm[a]) / (2.0 * h)).abs() < 1e-4);
            }
        }
        assert!(hess.asymmetry() < 1e-8);
    }
}

proptest! {
    #[test]
    fn directed_hessian_is_linear_in_direction(seed in 0u64..200, alpha in -3.0f64..3.0) {
        let net = corpus_net(seed);
        let z = probe(seed + 1, net.input_dim());
        let r1 = probe(seed + 2, net.output_dim());
        let r2 = probe(seed + 3, net.output_dim());
        let mixed: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| alpha * a + b).collect();
        let lhs = net.directed_hessian(&z, &mixed).unwrap();
        let rhs = net.directed_hessian(&z, &r1).unwrap().scale(alpha).add(&net.directed_hessian(&z, &r2).unwrap());
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);
        prop_assert!(lhs.asymmetry() < 1e-12);
    }

    #[test]
    fn net_json_round_trips(seed in 0u64..200) {
        let net = corpus_net(seed);
        let back: Net<f64> = serde_json::from_str(&serde_json::to_string(&net).unwrap()).unwrap();
        prop_assert_eq!(back, net);
    }
}
