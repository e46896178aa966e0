use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_BINS: usize = 20;

/// Mutual information (nats) between each latent (rows) and each factor (columns).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiMatrix {
    pub values: Matrix<f64>,
    pub factor_entropies: Vec<f64>,
    /// latent order for a heatmap: greedy diagonal ordering, best-matched latents first
    pub permutation: Vec<usize>,
}

impl MiMatrix {
    pub fn new(values: Matrix<f64>, factor_entropies: Vec<f64>) -> Result<Self> {
        if values.cols() != factor_entropies.len() {
            return Err(Error::invalid("one entropy per factor column is required"));
        }
        if values.as_slice().iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("mutual information values must be non-negative"));
        }
        let permutation = greedy_diagonal_order(&values);
        Ok(Self { values, factor_entropies, permutation })
    }

    pub fn n_latents(&self) -> usize {
        self.values.rows()
    }

    pub fn n_factors(&self) -> usize {
        self.values.cols()
    }

    /// Heatmap rows in `permutation` order: `latent,factor_1,...,factor_K`.
    pub fn to_heatmap_csv(&self) -> String {
        let mut out = String::from("latent");
        for k in 0..self.n_factors() {
            let _ = write!(out, ",factor_{}", k + 1);
        }
        out.push('\n');
        for &i in &self.permutation {
            let _ = write!(out, "{}", i + 1);
            for v in self.values.row(i) {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        out
    }
}

/// Repeatedly takes the largest remaining entry and places its latent next in line
/// (one latent per factor); unmatched latents follow by decreasing row maximum.
fn greedy_diagonal_order(values: &Matrix<f64>) -> Vec<usize> {
    let (d, k) = values.shape();
    let mut row_used = vec![false; d];
    let mut col_used = vec![false; k];
    let mut slots: Vec<(usize, usize)> = Vec::new();
    for _ in 0..d.min(k) {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in (0..d).filter(|&i| !row_used[i]) {
            for j in (0..k).filter(|&j| !col_used[j]) {
                if best.map_or(true, |(_, _, b)| values[(i, j)] > b) {
                    best = Some((i, j, values[(i, j)]));
                }
            }
        }
        let (i, j, _) = best.expect("non-empty remainder");
        row_used[i] = true;
        col_used[j] = true;
        slots.push((j, i));
    }
    slots.sort();
    let mut order: Vec<usize> = slots.into_iter().map(|(_, i)| i).collect();
    let mut rest: Vec<usize> = (0..d).filter(|&i| !row_used[i]).collect();
    let row_max = |i: usize| values.row(i).iter().copied().fold(0.0, f64::max);
    rest.sort_by(|&a, &b| row_max(b).total_cmp(&row_max(a)).then(a.cmp(&b)));
    order.extend(rest);
    order
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    counts.iter().filter(|&&c| c > 0).map(|&c| {
        let p = c as f64 / n as f64;
        -p * p.ln()
    }).sum()
}

/// Discrete labels of a factor column as dense category indices.
fn categories(labels: &[f64]) -> Result<(Vec<usize>, usize)> {
    let mut map = BTreeMap::new();
    for &v in labels {
        if !v.is_finite() {
            return Err(Error::invalid("factor labels must be finite"));
        }
        map.entry(v.to_bits()).or_insert(v);
    }
    let mut levels: Vec<f64> = map.into_values().collect();
    levels.sort_by(f64::total_cmp);
    let idx = labels.iter().map(|v| levels.binary_search_by(|l| l.total_cmp(v)).unwrap()).collect();
    Ok((idx, levels.len()))
}

/// Equal-width bins over the observed range; a constant column lands in one bin.
fn bin_column(values: &[f64], bins: usize) -> Result<Vec<usize>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("latent codes must be finite"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    Ok(values
        .iter()
        .map(|&v| if width > 0.0 { (((v - lo) / width) as usize).min(bins - 1) } else { 0 })
        .collect())
}

/// Plug-in mutual information between equal-width-binned latents (`n × d`) and
/// discrete factors (`n × K`).
pub fn mutual_info_matrix(codes: &Matrix<f64>, factors: &Matrix<f64>, bins: usize) -> Result<MiMatrix> {
    let n = codes.rows();
    if factors.rows() != n {
        return Err(Error::invalid("codes and factors need the same number of rows"));
    }
    if bins < 2 || n < 100 * bins {
        return Err(Error::invalid(format!("need bins >= 2 and n >= 100*bins, got n={n}, bins={bins}")));
    }
    let (d, k) = (codes.cols(), factors.cols());
    let facs: Vec<(Vec<usize>, usize)> = (0..k).map(|c| categories(&factors.col(c))).collect::<Result<_>>()?;
    let entropies: Vec<f64> = facs
        .iter()
        .map(|(idx, levels)| {
            let mut counts = vec![0usize; *levels];
            idx.iter().for_each(|&c| counts[c] += 1);
            entropy(&counts, n)
        })
        .collect();
    let mut values = Matrix::zeros(d, k);
    for i in 0..d {
        let b = bin_column(&codes.col(i), bins)?;
        let mut bc = vec![0usize; bins];
        b.iter().for_each(|&v| bc[v] += 1);
        let hb = entropy(&bc, n);
        for (c, (idx, levels)) in facs.iter().enumerate() {
            let mut joint = vec![0usize; bins * levels];
            for (&bi, &fi) in b.iter().zip(idx) {
                joint[bi * levels + fi] += 1;
            }
            let mi = hb + entropies[c] - entropy(&joint, n);
            values[(i, c)] = mi.max(0.0);
        }
    }
    MiMatrix::new(values, entropies)
}

/// Mutual information gap: mean over factors of the normalised gap between the
/// two most informative latents.
pub fn mig(mi: &MiMatrix) -> Result<f64> {
    if mi.n_latents() < 2 || mi.n_factors() == 0 {
        return Err(Error::invalid("mig needs at least two latents and one factor"));
    }
    let mut total = 0.0;
    let mut used = 0usize;
    for k in 0..mi.n_factors() {
        let h = mi.factor_entropies[k];
        if !(h > 0.0) {
            continue;
        }
        let mut col = mi.values.col(k);
        col.sort_by(|a, b| b.total_cmp(a));
        total += (col[0] - col[1]) / h;
        used += 1;
    }
    if used == 0 {
        return Err(Error::invalid("every factor has zero entropy"));
    }
    Ok(total / used as f64)
}

/// Axis-alignment score: `0.5 (Σ row maxima + Σ column maxima) / Σ entries`.
pub fn aas(mi: &MiMatrix) -> Result<f64> {
    let v = &mi.values;
    let total: f64 = v.as_slice().iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("aas needs at least one positive entry"));
    }
    let rows: f64 = (0..v.rows()).map(|i| v.row(i).iter().copied().fold(0.0, f64::max)).sum();
    let cols: f64 = (0..v.cols()).map(|j| v.col(j).into_iter().fold(0.0, f64::max)).sum();
    Ok(0.5 * (rows + cols) / total)
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties; `NaN` if either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid("spearman needs two equal-length samples of size >= 2"));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    Ok(cov / (va * vb).sqrt())
}
