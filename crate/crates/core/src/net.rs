//! Small fully connected networks with exact reverse-mode gradients, Jacobians and
//! directed Hessians.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::Real;

/// Smooth (C²) elementwise activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Softplus,
    Identity,
}

impl Activation {
    #[inline]
    pub fn value<T: Real>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Softplus => x.max(T::zero()) + (-x.abs()).exp().ln_1p(),
            Activation::Identity => x,
        }
    }

    #[inline]
    pub fn deriv<T: Real>(self, x: T) -> T {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                T::one() - t * t
            }
            Activation::Softplus => sigmoid(x),
            Activation::Identity => T::one(),
        }
    }

    #[inline]
    pub fn second_deriv<T: Real>(self, x: T) -> T {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                -T::lit(2.0) * t * (T::one() - t * t)
            }
            Activation::Softplus => {
                let s = sigmoid(x);
                s * (T::one() - s)
            }
            Activation::Identity => T::zero(),
        }
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Architecture of a feed-forward network: `widths[0]` inputs, `widths.last()`
/// outputs, one activation per layer (the last entry applies to the output).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub seed: u64,
}

impl NetSpec {
    /// Hidden layers share `hidden`; the output layer is linear.
    pub fn mlp(widths: Vec<usize>, hidden: Activation, seed: u64) -> Self {
        let n = widths.len().saturating_sub(1);
        let activations = (0..n).map(|l| if l + 1 == n { Activation::Identity } else { hidden }).collect();
        Self { widths, activations, seed }
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("a network needs at least two non-zero widths"));
        }
        if self.activations.len() != self.n_layers() {
            return Err(Error::invalid(format!(
                "{} layers but {} activations",
                self.n_layers(),
                self.activations.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct Layer<T> {
    /// out × in
    pub w: Matrix<T>,
    pub b: Vec<T>,
}

/// Per-layer weights and biases; also the shape of a gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent, bound(deserialize = "T: Real"))]
pub struct NetParams<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> NetParams<T> {
    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer { w: Matrix::zeros(l.w.rows(), l.w.cols()), b: vec![T::zero(); l.b.len()] })
            .collect();
        Self { layers }
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.w.as_slice().len() + l.b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattened view: each layer's weights (row-major) followed by its bias.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len());
        for l in &self.layers {
            out.extend_from_slice(l.w.as_slice());
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.len());
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.w.as_slice().len();
            l.w.as_mut_slice().copy_from_slice(&flat[k..k + nw]);
            k += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&flat[k..k + nb]);
            k += nb;
        }
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: T, other: &Self) {
        for (l, o) in self.layers.iter_mut().zip(&other.layers) {
            l.w.axpy(a, &o.w);
            for (x, &y) in l.b.iter_mut().zip(&o.b) {
                *x += a * y;
            }
        }
    }

    pub fn scale_in_place(&mut self, a: T) {
        for l in &mut self.layers {
            l.w.as_mut_slice().iter_mut().for_each(|x| *x *= a);
            l.b.iter_mut().for_each(|x| *x *= a);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.is_finite() && l.b.iter().all(|v| v.is_finite()))
    }
}

/// Network architecture plus parameters; serializes as `{spec, layers: [{w, b}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNet<T>", bound(deserialize = "T: Real"))]
pub struct Net<T> {
    pub spec: NetSpec,
    pub layers: NetParams<T>,
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
struct RawNet<T> {
    spec: NetSpec,
    layers: NetParams<T>,
}

impl<T: Real> TryFrom<RawNet<T>> for Net<T> {
    type Error = Error;

    fn try_from(raw: RawNet<T>) -> Result<Self> {
        Net::from_params(raw.spec, raw.layers)
    }
}

/// Intermediate values of one forward pass.
pub struct ForwardCache<T> {
    /// layer inputs; `inputs[0]` is the network input
    inputs: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    pub output: Vec<T>,
}

impl<T: Real> Net<T> {
    /// Seeded initialization: weights ~ N(0, 1/fan_in), zero biases.
    pub fn new(spec: NetSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let layers = spec
            .widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let sd = 1.0 / (fan_in as f64).sqrt();
                let weights = Matrix::from_fn(fan_out, fan_in, |_, _| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    T::lit(g * sd)
                });
                Layer { w: weights, b: vec![T::zero(); fan_out] }
            })
            .collect();
        Ok(Self { spec, layers: NetParams { layers } })
    }

    pub fn from_params(spec: NetSpec, layers: NetParams<T>) -> Result<Self> {
        spec.validate()?;
        if layers.layers.len() != spec.n_layers() {
            return Err(Error::invalid("layer count does not match the spec"));
        }
        for (l, w) in layers.layers.iter().zip(spec.widths.windows(2)) {
            if l.w.shape() != (w[1], w[0]) || l.b.len() != w[1] {
                return Err(Error::invalid(format!(
                    "layer shape {:?}/{} does not match widths {:?}",
                    l.w.shape(),
                    l.b.len(),
                    w
                )));
            }
        }
        if !layers.is_finite() {
            return Err(Error::invalid("non-finite network parameters"));
        }
        Ok(Self { spec, layers })
    }

    /// Single affine layer `x = W z + b` with identity activation.
    pub fn linear(w: Matrix<T>, b: Vec<T>) -> Result<Self> {
        let spec = NetSpec { widths: vec![w.cols(), w.rows()], activations: vec![Activation::Identity], seed: 0 };
        Self::from_params(spec, NetParams { layers: vec![Layer { w, b }] })
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    fn check_input(&self, z: &[T]) -> Result<()> {
        if z.len() != self.input_dim() {
            return Err(Error::invalid(format!("input has length {}, network expects {}", z.len(), self.input_dim())));
        }
        Ok(())
    }

    pub fn forward(&self, z: &[T]) -> Result<Vec<T>> {
        self.check_input(z)?;
        let mut a = z.to_vec();
        for (layer, act) in self.layers.layers.iter().zip(&self.spec.activations) {
            let mut h = layer.w.mul_vec(&a);
            for (x, &b) in h.iter_mut().zip(&layer.b) {
                *x = act.value(*x + b);
            }
            a = h;
        }
        Ok(a)
    }

    pub fn forward_cached(&self, z: &[T]) -> Result<ForwardCache<T>> {
        self.check_input(z)?;
        let n = self.spec.n_layers();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut a = z.to_vec();
        for (layer, act) in self.layers.layers.iter().zip(&self.spec.activations) {
            let mut h = layer.w.mul_vec(&a);
            for (x, &b) in h.iter_mut().zip(&layer.b) {
                *x += b;
            }
            let next = h.iter().map(|&x| act.value(x)).collect();
            inputs.push(std::mem::replace(&mut a, next));
            pre.push(h);
        }
        Ok(ForwardCache { inputs, pre, output: a })
    }

    /// Reverse pass for one sample: accumulates `∂L/∂θ` into `grads` and returns `∂L/∂z`.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &[T], grads: &mut NetParams<T>) -> Vec<T> {
        let mut g = grad_out.to_vec();
        for l in (0..self.spec.n_layers()).rev() {
            let act = self.spec.activations[l];
            for (gi, &h) in g.iter_mut().zip(&cache.pre[l]) {
                *gi *= act.deriv(h);
            }
            let input = &cache.inputs[l];
            let gl = &mut grads.layers[l];
            for (i, &gi) in g.iter().enumerate() {
                if gi == T::zero() {
                    continue;
                }
                gl.b[i] += gi;
                for (w, &x) in gl.w.row_mut(i).iter_mut().zip(input) {
                    *w += gi * x;
                }
            }
            g = self.layers.layers[l].w.tr_mul_vec(&g);
        }
        g
    }

    /// Gradient of `Σ_k loss(k, forward(batch[k]))` with respect to all parameters.
    ///
    /// `loss` returns the per-sample value and its gradient with respect to the
    /// network output.
    pub fn param_gradient<F>(&self, batch: &[Vec<T>], mut loss: F) -> Result<(T, NetParams<T>)>
    where
        F: FnMut(usize, &[T]) -> (T, Vec<T>),
    {
        let mut grads = self.layers.zeros_like();
        let mut total = T::zero();
        for (k, z) in batch.iter().enumerate() {
            let cache = self.forward_cached(z)?;
            let (value, grad_out) = loss(k, &cache.output);
            if !value.is_finite() {
                return Err(Error::numerical(format!("non-finite loss at sample {k}")));
            }
            total += value;
            self.backward(&cache, &grad_out, &mut grads);
        }
        if !grads.is_finite() {
            return Err(Error::numerical("non-finite gradient"));
        }
        Ok((total, grads))
    }

    /// Per-layer forward-mode Jacobians of the pre-activations with respect to `z`.
    fn pre_jacobians(&self, cache: &ForwardCache<T>) -> Vec<Matrix<T>> {
        let d = self.input_dim();
        let mut ja = Matrix::identity(d);
        let mut out = Vec::with_capacity(self.spec.n_layers());
        for (l, layer) in self.layers.layers.iter().enumerate() {
            let jh = layer.w.matmul(&ja);
            let act = self.spec.activations[l];
            let mut next = jh.clone();
            for (i, &h) in cache.pre[l].iter().enumerate() {
                let s = act.deriv(h);
                next.row_mut(i).iter_mut().for_each(|x| *x *= s);
            }
            out.push(jh);
            ja = next;
        }
        out
    }

    /// `[J]_{ij} = ∂x_i/∂z_j`, shape output × input.
    pub fn jacobian(&self, z: &[T]) -> Result<Matrix<T>> {
        let cache = self.forward_cached(z)?;
        let jhs = self.pre_jacobians(&cache);
        let last = self.spec.n_layers() - 1;
        let act = self.spec.activations[last];
        let mut j = jhs[last].clone();
        for (i, &h) in cache.pre[last].iter().enumerate() {
            let s = act.deriv(h);
            j.row_mut(i).iter_mut().for_each(|x| *x *= s);
        }
        Ok(j)
    }

    /// Hessian of `z ↦ ⟨r, forward(z)⟩` with `r` held fixed: `Σ_ℓ r_ℓ ∇²_z x_ℓ`.
    ///
    /// Since every layer is affine before its activation, the Hessian is
    /// `Σ_l J_hᵀ diag(g_l ∘ σ_l''(h_l)) J_h` where `g_l` is the adjoint of the layer output.
    pub fn directed_hessian(&self, z: &[T], r: &[T]) -> Result<Matrix<T>> {
        if r.len() != self.output_dim() {
            return Err(Error::invalid(format!(
                "direction has length {}, network output is {}",
                r.len(),
                self.output_dim()
            )));
        }
        let cache = self.forward_cached(z)?;
        let jhs = self.pre_jacobians(&cache);
        let d = self.input_dim();
        let mut hess = Matrix::zeros(d, d);
        let mut g = r.to_vec();
        for l in (0..self.spec.n_layers()).rev() {
            let act = self.spec.activations[l];
            let jh = &jhs[l];
            for (i, &h) in cache.pre[l].iter().enumerate() {
                let c = g[i] * act.second_deriv(h);
                if c == T::zero() {
                    continue;
                }
                let row = jh.row(i);
                for a in 0..d {
                    let ca = c * row[a];
                    for b in 0..d {
                        hess[(a, b)] += ca * row[b];
                    }
                }
            }
            for (gi, &h) in g.iter_mut().zip(&cache.pre[l]) {
                *gi *= act.deriv(h);
            }
            g = self.layers.layers[l].w.tr_mul_vec(&g);
        }
        Ok(hess.symmetrize())
    }

    /// Gradient of `⟨r, forward(z)⟩` with respect to `z`.
    pub fn vjp(&self, z: &[T], r: &[T]) -> Result<Vec<T>> {
        let cache = self.forward_cached(z)?;
        let mut scratch = self.layers.zeros_like();
        Ok(self.backward(&cache, r, &mut scratch))
    }

    pub fn output_dot(&self, z: &[T], r: &[T]) -> Result<T> {
        Ok(dot(&self.forward(z)?, r))
    }
}
