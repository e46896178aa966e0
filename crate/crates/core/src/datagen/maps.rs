use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Strictly increasing C² scalar map used coordinate-wise by the constructed generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MonotoneMap {
    Identity,
    /// `Σ c · t^p / p` over odd powers `p` with `c > 0`; must contain `p = 1`.
    Poly { terms: Vec<(u32, f64)> },
    /// `slope · t + bump · tanh(t)`; derivative confined to `(slope, slope + bump]`.
    TanhBump { slope: f64, bump: f64 },
}

impl MonotoneMap {
    /// `t³/3 + t`
    pub fn cubic() -> Self {
        MonotoneMap::Poly { terms: vec![(3, 1.0), (1, 1.0)] }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MonotoneMap::Identity => Ok(()),
            MonotoneMap::Poly { terms } => {
                if !terms.iter().any(|&(p, _)| p == 1) {
                    return Err(Error::invalid("polynomial map needs a linear term"));
                }
                if terms.iter().any(|&(p, c)| p % 2 == 0 || !(c > 0.0) || !c.is_finite()) {
                    return Err(Error::invalid("polynomial map needs odd powers with positive coefficients"));
                }
                Ok(())
            }
            MonotoneMap::TanhBump { slope, bump } => {
                if !(*slope > 0.0) || !(*bump >= 0.0) || !slope.is_finite() || !bump.is_finite() {
                    return Err(Error::invalid("tanh-bump map needs slope > 0 and bump >= 0"));
                }
                Ok(())
            }
        }
    }

    pub fn value<T: Real>(&self, t: T) -> T {
        match self {
            MonotoneMap::Identity => t,
            MonotoneMap::Poly { terms } => {
                terms.iter().map(|&(p, c)| T::lit(c / p as f64) * t.powi(p as i32)).sum()
            }
            MonotoneMap::TanhBump { slope, bump } => T::lit(*slope) * t + T::lit(*bump) * t.tanh(),
        }
    }

    pub fn deriv<T: Real>(&self, t: T) -> T {
        match self {
            MonotoneMap::Identity => T::one(),
            MonotoneMap::Poly { terms } => terms.iter().map(|&(p, c)| T::lit(c) * t.powi(p as i32 - 1)).sum(),
            MonotoneMap::TanhBump { slope, bump } => {
                let th = t.tanh();
                T::lit(*slope) + T::lit(*bump) * (T::one() - th * th)
            }
        }
    }

    pub fn second_deriv<T: Real>(&self, t: T) -> T {
        match self {
            MonotoneMap::Identity => T::zero(),
            MonotoneMap::Poly { terms } => terms
                .iter()
                .filter(|&&(p, _)| p > 1)
                .map(|&(p, c)| T::lit(c * (p - 1) as f64) * t.powi(p as i32 - 2))
                .sum(),
            MonotoneMap::TanhBump { bump, .. } => {
                let th = t.tanh();
                -T::lit(2.0 * bump) * th * (T::one() - th * th)
            }
        }
    }
}

/// Pairwise distinct monomial mixtures: `t³/3 + t`, `t⁵/5 + 2t`, `t³/3 + 3t`, ...
pub fn default_phis(d: usize) -> Vec<MonotoneMap> {
    (1..=d)
        .map(|k| {
            let p = if k % 2 == 1 { 3 } else { 5 };
            MonotoneMap::Poly { terms: vec![(p, 1.0), (1, k as f64)] }
        })
        .collect()
}

/// Tanh-bump maps whose derivative ranges are disjoint across coordinates, so that the
/// singular values of `A·diag(φ')` never cross and coordinate 0 always carries the largest.
pub fn banded_phis(d: usize, jitter: &[f64]) -> Vec<MonotoneMap> {
    assert_eq!(jitter.len(), d, "one jitter value in [0, 1) per coordinate");
    (0..d)
        .map(|k| {
            let j = jitter[k].clamp(0.0, 0.999);
            MonotoneMap::TanhBump { slope: 1.0 + 2.0 * (d - 1 - k) as f64 + 0.1 * j, bump: 0.3 + 0.6 * j }
        })
        .collect()
}
