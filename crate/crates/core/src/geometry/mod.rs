//! Jacobian-SVD geometry of a generator: regular-set checks, singular-vector paths,
//! seams, seam coordinates and the push-forward manifold density.

mod generator;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use generator::{FactorPrior, Generator, LinearGenerator, Provenance, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{continuous_svd_step, dot, norm, signed_permutation_distance, svd, sub_vec, SvdTriple};
use crate::scalar::Real;

pub const DEFAULT_STEP: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularDiagnostics<T> {
    pub in_regular_set: bool,
    /// smallest consecutive singular-value gap, relative to the largest singular value
    pub min_gap: T,
    /// smallest singular value, relative to the largest
    pub min_sv: T,
}

/// Canonical SVD of the Jacobian at `z`.
pub fn jacobian_svd<T: Real, G: Generator<T> + ?Sized>(g: &G, z: &[T]) -> Result<SvdTriple<T>> {
    svd(&g.jacobian(z)?)
}

/// Membership of `z` in the regular set: finite Jacobian of full column rank with
/// pairwise separated singular values (both relative to `gap_tol · s_max`).
pub fn regular_check<T: Real, G: Generator<T> + ?Sized>(g: &G, z: &[T], gap_tol: T) -> RegularDiagnostics<T> {
    let bad = RegularDiagnostics { in_regular_set: false, min_gap: T::nan(), min_sv: T::nan() };
    let Ok(j) = g.jacobian(z) else { return bad };
    if !j.is_finite() {
        return bad;
    }
    let Ok(t) = svd(&j) else { return bad };
    let smax = t.s[0];
    if smax <= T::zero() {
        return RegularDiagnostics { in_regular_set: false, min_gap: T::zero(), min_sv: T::zero() };
    }
    let min_sv = *t.s.last().unwrap() / smax;
    let min_gap = if t.dim() > 1 { t.min_relative_gap() } else { T::infinity() };
    RegularDiagnostics { in_regular_set: min_sv > gap_tol && min_gap > gap_tol, min_gap, min_sv }
}

pub(crate) fn require_regular<T: Real, G: Generator<T> + ?Sized>(g: &G, z: &[T], gap_tol: T) -> Result<()> {
    let diag = regular_check(g, z, gap_tol);
    if !diag.in_regular_set {
        return Err(Error::invalid(format!(
            "point is outside the regular set (min relative gap {:e}, min relative singular value {:e})",
            diag.min_gap.to_f64_lossy(),
            diag.min_sv.to_f64_lossy()
        )));
    }
    Ok(())
}

/// Discretized singular-vector path or seam, or an axis traversal for comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct PathTrace<T> {
    /// singular pair followed (or traversed axis)
    pub index: usize,
    /// latent coordinate the path moves along at `t = 0` (signed-permutation match of `V`)
    pub axis: usize,
    /// `+1` if `v^index` points along `+e_axis` at `t = 0`
    pub orientation: T,
    pub t: Vec<T>,
    pub z: Vec<Vec<T>>,
    pub x: Vec<Vec<T>>,
    /// `s^index` at each node (for traversals: speed `‖J e_axis‖`)
    pub s: Vec<T>,
    pub u_vec: Vec<Vec<T>>,
    pub v_vec: Vec<Vec<T>>,
    /// seam coordinate `∫₀ᵗ s dτ`
    pub seam_coord: Vec<T>,
    /// largest angle between the finite-difference tangent of `x(t)` and `s·u`
    pub max_tangent_angle: T,
    /// why the path stopped short of the requested span, if it did
    pub exit: Vec<String>,
}

impl<T: Real> PathTrace<T> {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Node index of `t = 0`.
    pub fn origin(&self) -> usize {
        self.t.iter().position(|&t| t == T::zero()).expect("every trace contains t = 0")
    }

    /// CSV with header `t,z_1..z_d,x_1..x_m,s_i,u_i`.
    pub fn to_csv(&self) -> String {
        let d = self.z.first().map_or(0, Vec::len);
        let m = self.x.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|k| format!("z_{k}")));
        header.extend((1..=m).map(|k| format!("x_{k}")));
        header.push(format!("s_{}", self.index + 1));
        header.push(format!("u_{}", self.index + 1));
        let mut out = header.join(",");
        out.push('\n');
        for k in 0..self.len() {
            let mut fields = vec![format!("{:?}", self.t[k])];
            fields.extend(self.z[k].iter().map(|v| format!("{v:?}")));
            fields.extend(self.x[k].iter().map(|v| format!("{v:?}")));
            fields.push(format!("{:?}", self.s[k]));
            fields.push(format!("{:?}", self.seam_coord[k]));
            let _ = writeln!(out, "{}", fields.join(","));
        }
        out
    }
}

/// Cumulative integral from node 0 of samples on a uniform grid with spacing `h`,
/// using Simpson's rule on node pairs and a three-point rule for odd end intervals.
pub(crate) fn cumulative_simpson<T: Real>(f: &[T], h: T) -> Vec<T> {
    let n = f.len();
    let mut out = vec![T::zero(); n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = h * (f[0] + f[1]) / T::lit(2.0);
        return out;
    }
    let twelfth = h / T::lit(12.0);
    for k in 1..n {
        if k % 2 == 0 {
            out[k] = out[k - 2] + h / T::lit(3.0) * (f[k - 2] + T::lit(4.0) * f[k - 1] + f[k]);
        } else if k == 1 {
            out[1] = twelfth * (T::lit(5.0) * f[0] + T::lit(8.0) * f[1] - f[2]);
        } else {
            out[k] = out[k - 1] + twelfth * (-f[k - 2] + T::lit(8.0) * f[k - 1] + T::lit(5.0) * f[k]);
        }
    }
    out
}

/// Composite Simpson integral over a uniform grid (trapezoid on a trailing odd interval).
pub fn simpson<T: Real>(f: &[T], h: T) -> T {
    cumulative_simpson(f, h).last().copied().unwrap_or_else(T::zero)
}

struct Half<T> {
    z: Vec<Vec<T>>,
    triples: Vec<SvdTriple<T>>,
    exit: Option<String>,
}

/// Follows `dz/dt = v^i(z)` with RK4, every stage sign-matched to the step's anchor.
fn integrate_half<T: Real, G: Generator<T> + ?Sized>(
    g: &G,
    z0: &[T],
    anchor0: &SvdTriple<T>,
    i: usize,
    h: T,
    n_steps: usize,
    gap_tol: T,
) -> Half<T> {
    let mut z = z0.to_vec();
    let mut anchor = anchor0.clone();
    let mut out = Half { z: Vec::new(), triples: Vec::new(), exit: None };
    let field = |p: &[T], anchor: &SvdTriple<T>| -> Result<SvdTriple<T>> {
        let j = g.jacobian(p)?;
        let t = continuous_svd_step(anchor, &j, gap_tol)?;
        let smax = t.s.iter().copied().fold(T::zero(), T::max);
        if t.s.iter().any(|&s| s <= gap_tol * smax) {
            return Err(Error::DegenerateSpectrum("Jacobian lost full rank".into()));
        }
        Ok(t)
    };
    let half = T::lit(0.5);
    for step in 0..n_steps {
        let stage = || -> Result<(Vec<T>, SvdTriple<T>)> {
            let k1 = anchor.v.col(i);
            let k2 = field(&crate::linalg::add_scaled(&z, half * h, &k1), &anchor)?.v.col(i);
            let k3 = field(&crate::linalg::add_scaled(&z, half * h, &k2), &anchor)?.v.col(i);
            let k4 = field(&crate::linalg::add_scaled(&z, h, &k3), &anchor)?.v.col(i);
            let sixth = h / T::lit(6.0);
            let next: Vec<T> = (0..z.len())
                .map(|c| z[c] + sixth * (k1[c] + T::lit(2.0) * k2[c] + T::lit(2.0) * k3[c] + k4[c]))
                .collect();
            let triple = field(&next, &anchor)?;
            Ok((next, triple))
        };
        match stage() {
            Ok((next, triple)) => {
                z = next;
                anchor = triple;
                out.z.push(z.clone());
                out.triples.push(anchor.clone());
            }
            Err(e) => {
                out.exit = Some(format!("left the regular set after {step} steps: {e}"));
                break;
            }
        }
    }
    out
}

fn node_counts<T: Real>(t_span: (T, T), step: T) -> Result<(usize, usize)> {
    let (lo, hi) = t_span;
    if !(step > T::zero()) || lo > T::zero() || hi < T::zero() {
        return Err(Error::invalid("t_span must contain 0 and step must be positive"));
    }
    let back = (-lo / step).round().to_usize().unwrap_or(0);
    let fwd = (hi / step).round().to_usize().unwrap_or(0);
    Ok((back, fwd))
}

fn seam_axis<T: Real>(triple: &SvdTriple<T>, i: usize) -> (usize, T) {
    let (_, perm, _) = signed_permutation_distance(&triple.v.transpose());
    let axis = perm[i];
    let orientation = if triple.v[(axis, i)] < T::zero() { -T::one() } else { T::one() };
    (axis, orientation)
}

/// Integrates the `i`-th singular-vector path through `z0` over `t_span`.
///
/// The path stops early (recording the reason in `exit`) if it leaves the regular set.
pub fn integrate_sv_path<T: Real, G: Generator<T> + ?Sized>(
    g: &G,
    z0: &[T],
    i: usize,
    t_span: (T, T),
    step: T,
    gap_tol: T,
) -> Result<PathTrace<T>> {
    if i >= g.latent_dim() {
        return Err(Error::invalid(format!("singular index {i} out of range")));
    }
    require_regular(g, z0, gap_tol)?;
    let (n_back, n_fwd) = node_counts(t_span, step)?;
    let anchor = jacobian_svd(g, z0)?;
    let fwd = integrate_half(g, z0, &anchor, i, step, n_fwd, gap_tol);
    let back = integrate_half(g, z0, &anchor, i, -step, n_back, gap_tol);

    let (axis, orientation) = seam_axis(&anchor, i);
    let nb = back.z.len();
    let mut trace = PathTrace {
        index: i,
        axis,
        orientation,
        t: Vec::new(),
        z: Vec::new(),
        x: Vec::new(),
        s: Vec::new(),
        u_vec: Vec::new(),
        v_vec: Vec::new(),
        seam_coord: Vec::new(),
        max_tangent_angle: T::zero(),
        exit: Vec::new(),
    };
    let nodes = back
        .z
        .iter()
        .zip(&back.triples)
        .enumerate()
        .rev()
        .map(|(k, (z, tr))| (-T::lit((k + 1) as f64) * step, z, tr))
        .chain(std::iter::once((T::zero(), &z0.to_vec(), &anchor)))
        .chain(fwd.z.iter().zip(&fwd.triples).enumerate().map(|(k, (z, tr))| (T::lit((k + 1) as f64) * step, z, tr)))
        .map(|(t, z, tr)| (t, z.clone(), tr.clone()))
        .collect::<Vec<_>>();
    for (t, z, tr) in nodes {
        trace.x.push(g.value(&z)?);
        trace.t.push(t);
        trace.z.push(z);
        trace.s.push(tr.s[i]);
        trace.u_vec.push(tr.u.col(i));
        trace.v_vec.push(tr.v.col(i));
    }
    let fwd_s: Vec<T> = trace.s[nb..].to_vec();
    let mut back_s: Vec<T> = trace.s[..=nb].to_vec();
    back_s.reverse();
    let fwd_u = cumulative_simpson(&fwd_s, step);
    let mut back_u = cumulative_simpson(&back_s, -step);
    back_u.reverse();
    trace.seam_coord = back_u[..nb].iter().chain(fwd_u.iter()).copied().collect();
    if let Some(e) = back.exit {
        trace.exit.push(format!("backward: {e}"));
    }
    if let Some(e) = fwd.exit {
        trace.exit.push(format!("forward: {e}"));
    }
    Ok(trace)
}

fn angle<T: Real>(a: &[T], b: &[T]) -> T {
    let c = dot(a, b) / (norm(a) * norm(b));
    c.max(-T::one()).min(T::one()).acos()
}

/// Largest angle between central-difference tangents of `x(t)` and `s·u` over interior nodes.
pub fn max_tangent_misalignment<T: Real>(trace: &PathTrace<T>) -> T {
    let mut worst = T::zero();
    for k in 1..trace.len().saturating_sub(1) {
        let dt = trace.t[k + 1] - trace.t[k - 1];
        let dx: Vec<T> = sub_vec(&trace.x[k + 1], &trace.x[k - 1]).into_iter().map(|v| v / dt).collect();
        let su: Vec<T> = trace.u_vec[k].iter().map(|&u| u * trace.s[k]).collect();
        worst = worst.max(angle(&dx, &su));
    }
    worst
}

/// The seam through `g(z0)`: the image of the `i`-th singular-vector path, with its
/// tangents checked against `s^i u^i` and the seam coordinate filled in.
pub fn trace_seam<T: Real, G: Generator<T> + ?Sized>(
    g: &G,
    z0: &[T],
    i: usize,
    t_span: (T, T),
    step: T,
    gap_tol: T,
) -> Result<PathTrace<T>> {
    let mut trace = integrate_sv_path(g, z0, i, t_span, step, gap_tol)?;
    let worst = max_tangent_misalignment(&trace);
    trace.max_tangent_angle = worst;
    if worst > T::lit(10.0) * step {
        return Err(Error::GeometryInconsistent(format!(
            "seam tangent deviates from s·u by {:e} rad (limit {:e})",
            worst.to_f64_lossy(),
            (T::lit(10.0) * step).to_f64_lossy()
        )));
    }
    Ok(trace)
}

/// Image of the axis-aligned line `z0 + t e_i` on the same node grid as [`trace_seam`].
pub fn axis_traversal_image<T: Real, G: Generator<T> + ?Sized>(
    g: &G,
    z0: &[T],
    i: usize,
    t_span: (T, T),
    step: T,
) -> Result<PathTrace<T>> {
    if i >= g.latent_dim() || z0.len() != g.latent_dim() {
        return Err(Error::invalid("axis or latent dimension out of range"));
    }
    let (n_back, n_fwd) = node_counts(t_span, step)?;
    let mut trace = PathTrace {
        index: i,
        axis: i,
        orientation: T::one(),
        t: Vec::new(),
        z: Vec::new(),
        x: Vec::new(),
        s: Vec::new(),
        u_vec: Vec::new(),
        v_vec: Vec::new(),
        seam_coord: Vec::new(),
        max_tangent_angle: T::zero(),
        exit: Vec::new(),
    };
    let e_i: Vec<T> = (0..z0.len()).map(|k| if k == i { T::one() } else { T::zero() }).collect();
    for k in -(n_back as i64)..=(n_fwd as i64) {
        let t = T::lit(k as f64) * step;
        let z: Vec<T> = z0.iter().zip(&e_i).map(|(&a, &e)| a + t * e).collect();
        let x = g.value(&z)?;
        let col = g.jacobian(&z)?.col(i);
        let speed = norm(&col);
        let u = if speed > T::zero() { col.iter().map(|&c| c / speed).collect() } else { col };
        trace.t.push(t);
        trace.z.push(z);
        trace.x.push(x);
        trace.s.push(speed);
        trace.u_vec.push(u);
        trace.v_vec.push(e_i.clone());
    }
    let origin = n_back;
    let fwd = cumulative_simpson(&trace.s[origin..], step);
    let mut back_s = trace.s[..=origin].to_vec();
    back_s.reverse();
    let mut back = cumulative_simpson(&back_s, -step);
    back.reverse();
    trace.seam_coord = back[..origin].iter().chain(fwd.iter()).copied().collect();
    trace.max_tangent_angle = max_tangent_misalignment(&trace);
    Ok(trace)
}

/// Largest node-by-node distance in `X` between a seam and an axis traversal through
/// the same point. The seam is followed in the direction of `+e_axis`.
pub fn max_node_distance<T: Real>(seam: &PathTrace<T>, traversal: &PathTrace<T>) -> T {
    let o_s = seam.origin() as i64;
    let o_t = traversal.origin() as i64;
    let flip = seam.orientation < T::zero();
    let mut worst = T::zero();
    for k in -o_t..(traversal.len() as i64 - o_t) {
        let ks = if flip { -k } else { k };
        let is = o_s + ks;
        if is < 0 || is >= seam.len() as i64 {
            continue;
        }
        let d = norm(&sub_vec(&seam.x[is as usize], &traversal.x[(o_t + k) as usize]));
        worst = worst.max(d);
    }
    worst
}

/// `log p_μ(g(z))` two ways.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct DensityValue<T> {
    /// `−½ log det(JᵀJ) + Σ log p_i(z_i)`
    pub log_density: T,
    /// `Σ_i [log p_{a(i)}(z_{a(i)}) − log s^i]`
    pub log_density_factorised: T,
    /// per-seam factors `log p_{a(i)}(z_{a(i)}) − log s^i(z)`
    pub factor_logs: Vec<T>,
    /// latent axis `a(i)` matched to each singular pair
    pub axes: Vec<usize>,
}

/// Push-forward density of the prior on the mean manifold at `g(z)`.
pub fn manifold_density<T: Real, G: Generator<T> + ?Sized, P: FactorPrior<T> + ?Sized>(
    g: &G,
    z: &[T],
    prior: &P,
) -> Result<DensityValue<T>> {
    require_regular(g, z, T::lit(crate::linalg::DEFAULT_GAP_TOL))?;
    let j = g.jacobian(z)?;
    let log_det = j.gram().log_det_spd()?;
    let log_density = -T::lit(0.5) * log_det + prior.log_joint(z);

    let triple = svd(&j)?;
    let (_, perm, _) = signed_permutation_distance(&triple.v.transpose());
    let factor_logs: Vec<T> =
        (0..triple.dim()).map(|i| prior.log_density(perm[i], z[perm[i]]) - triple.s[i].ln()).collect();
    let log_density_factorised = factor_logs.iter().copied().sum();
    Ok(DensityValue { log_density, log_density_factorised, factor_logs, axes: perm })
}

/// 1-D seam density `f_i(u_i(t)) = p_a(z_a(t)) / s^i(z(t))` at every node of `trace`.
pub fn seam_density_profile<T: Real, P: FactorPrior<T> + ?Sized>(trace: &PathTrace<T>, prior: &P) -> Vec<(T, T)> {
    let a = trace.axis;
    trace
        .z
        .iter()
        .zip(&trace.s)
        .zip(&trace.seam_coord)
        .map(|((z, &s), &u)| (u, (prior.log_density(a, z[a]) - s.ln()).exp()))
        .collect()
}

/// `∫ f_i du_i` along a traced seam, via Simpson in `t` (`du = s dt`).
pub fn seam_density_mass<T: Real>(trace: &PathTrace<T>, profile: &[(T, T)]) -> T {
    let h = if trace.len() > 1 { trace.t[1] - trace.t[0] } else { T::zero() };
    let integrand: Vec<T> = profile.iter().zip(&trace.s).map(|(&(_, f), &s)| f * s).collect();
    simpson(&integrand, h)
}
