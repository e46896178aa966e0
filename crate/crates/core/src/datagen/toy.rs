use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Filled squares on a small canvas varying in x position, y position and size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyFactorSpec {
    pub side: usize,
    pub x_levels: usize,
    pub y_levels: usize,
    pub scale_levels: usize,
    /// square edge length range in pixels
    pub min_scale: f64,
    pub max_scale: f64,
}

impl Default for ToyFactorSpec {
    fn default() -> Self {
        Self { side: 16, x_levels: 3, y_levels: 3, scale_levels: 3, min_scale: 3.0, max_scale: 6.0 }
    }
}

impl ToyFactorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.x_levels < 3 || self.y_levels < 3 || self.scale_levels < 3 {
            return Err(Error::invalid("every factor needs at least 3 levels"));
        }
        if !(self.min_scale > 0.0 && self.min_scale < self.max_scale && self.max_scale + 1.0 < self.side as f64) {
            return Err(Error::invalid("scales must satisfy 0 < min < max < side - 1"));
        }
        Ok(())
    }

    pub fn n_images(&self) -> usize {
        self.x_levels * self.y_levels * self.scale_levels
    }
}

fn level(k: usize, n: usize, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * k as f64 / (n - 1) as f64
}

/// Length of `[a, b] ∩ [c, d]`.
fn overlap(a: f64, b: f64, c: f64, d: f64) -> f64 {
    (b.min(d) - a.max(c)).max(0.0)
}

/// Renders every factor combination; returns `(images: pixels × n, labels: n × 3)` with
/// labels `(x index, y index, scale index)`. Pixel values are exact area coverage in `[0, 1]`.
pub fn render_toy_factors<T: Real>(spec: &ToyFactorSpec) -> Result<(Matrix<T>, Matrix<T>)> {
    spec.validate()?;
    let side = spec.side as f64;
    let margin = spec.max_scale / 2.0 + 0.5;
    let n = spec.n_images();
    let mut images = Matrix::zeros(spec.side * spec.side, n);
    let mut labels = Matrix::zeros(n, 3);
    let mut k = 0;
    for xi in 0..spec.x_levels {
        for yi in 0..spec.y_levels {
            for si in 0..spec.scale_levels {
                let cx = level(xi, spec.x_levels, margin, side - margin);
                let cy = level(yi, spec.y_levels, margin, side - margin);
                let half = level(si, spec.scale_levels, spec.min_scale, spec.max_scale) / 2.0;
                for py in 0..spec.side {
                    let oy = overlap(py as f64, py as f64 + 1.0, cy - half, cy + half);
                    if oy == 0.0 {
                        continue;
                    }
                    for px in 0..spec.side {
                        let ox = overlap(px as f64, px as f64 + 1.0, cx - half, cx + half);
                        images[(py * spec.side + px, k)] = T::lit(ox * oy);
                    }
                }
                labels[(k, 0)] = T::lit(xi as f64);
                labels[(k, 1)] = T::lit(yi as f64);
                labels[(k, 2)] = T::lit(si as f64);
                k += 1;
            }
        }
    }
    Ok((images, labels))
}
