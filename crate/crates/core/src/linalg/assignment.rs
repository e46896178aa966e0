//! Hungarian method for the square assignment problem.

use super::matrix::Matrix;
use crate::scalar::Real;

/// Assignment `row -> column` maximizing the summed weight of a square matrix.
///
/// Shortest augmenting path formulation with row/column potentials, O(n³).
pub fn max_weight_assignment<T: Real>(weights: &Matrix<T>) -> Vec<usize> {
    assert!(weights.is_square(), "assignment needs a square weight matrix");
    let n = weights.rows();
    if n == 0 {
        return Vec::new();
    }
    let cost = |i: usize, j: usize| -weights[(i, j)];
    // 1-based potentials; column 0 is a virtual sink
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![T::infinity(); n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = T::infinity();
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    assignment
}

/// Max-abs distance from a square matrix to the signed permutation picked by a
/// maximum `|m|` assignment with signs matched entrywise.
///
/// Returns `(distance, permutation, signs)` where `permutation[i]` is the column
/// holding the non-zero of row `i`.
pub fn signed_permutation_distance<T: Real>(m: &Matrix<T>) -> (T, Vec<usize>, Vec<T>) {
    let perm = max_weight_assignment(&m.abs());
    let signs: Vec<T> = perm
        .iter()
        .enumerate()
        .map(|(i, &j)| if m[(i, j)] < T::zero() { -T::one() } else { T::one() })
        .collect();
    let mut p = Matrix::zeros(m.rows(), m.cols());
    for (i, &j) in perm.iter().enumerate() {
        p[(i, j)] = signs[i];
    }
    (m.max_abs_diff(&p), perm, signs)
}

/// Exact `min_P max|m − P|` over signed permutation matrices (bottleneck search).
///
/// Agrees with [`signed_permutation_distance`] whenever the distance is below 1/2;
/// beyond that the maximum-weight assignment need not minimise the largest entry.
pub fn bottleneck_signed_permutation_distance<T: Real>(m: &Matrix<T>) -> (T, Vec<usize>, Vec<T>) {
    let n = m.rows();
    assert_eq!(n, m.cols(), "square matrix required");
    let a = m.abs();
    let mut candidates: Vec<T> = a
        .as_slice()
        .iter()
        .flat_map(|&v| [v, (T::one() - v).max(T::zero())])
        .collect();
    candidates.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    candidates.dedup();
    let (mut lo, mut hi) = (0usize, candidates.len() - 1);
    let mut best = feasible_matching(&a, candidates[hi]).expect("the largest candidate admits every permutation");
    while lo < hi {
        let mid = (lo + hi) / 2;
        match feasible_matching(&a, candidates[mid]) {
            Some(p) => {
                best = p;
                hi = mid;
            }
            None => lo = mid + 1,
        }
    }
    let signs: Vec<T> = best.iter().enumerate().map(|(i, &j)| if m[(i, j)] < T::zero() { -T::one() } else { T::one() }).collect();
    let mut p = Matrix::zeros(n, n);
    for (i, &j) in best.iter().enumerate() {
        p[(i, j)] = signs[i];
    }
    (m.max_abs_diff(&p), best, signs)
}

/// A permutation whose signed-permutation distance to `|m|` is at most `tau`, if any.
fn feasible_matching<T: Real>(a: &Matrix<T>, tau: T) -> Option<Vec<usize>> {
    let n = a.rows();
    // entries above tau must lie on the permutation
    let mut forced_row = vec![None; n];
    let mut forced_col = vec![None; n];
    for i in 0..n {
        for j in 0..n {
            if a[(i, j)] > tau {
                if forced_row[i].is_some() || forced_col[j].is_some() {
                    return None;
                }
                forced_row[i] = Some(j);
                forced_col[j] = Some(i);
            }
        }
    }
    let allowed = |i: usize, j: usize| -> bool {
        T::one() - a[(i, j)] <= tau
            && forced_row[i].map_or(true, |f| f == j)
            && forced_col[j].map_or(true, |f| f == i)
    };
    let mut col_match: Vec<Option<usize>> = vec![None; n];
    fn augment(
        i: usize,
        n: usize,
        allowed: &dyn Fn(usize, usize) -> bool,
        seen: &mut [bool],
        col_match: &mut [Option<usize>],
    ) -> bool {
        for j in 0..n {
            if allowed(i, j) && !seen[j] {
                seen[j] = true;
                if col_match[j].map_or(true, |k| augment(k, n, allowed, seen, col_match)) {
                    col_match[j] = Some(i);
                    return true;
                }
            }
        }
        false
    }
    for i in 0..n {
        let mut seen = vec![false; n];
        if !augment(i, n, &allowed, &mut seen, &mut col_match) {
            return None;
        }
    }
    let mut perm = vec![0; n];
    for (j, i) in col_match.iter().enumerate() {
        perm[i.expect("perfect matching")] = j;
    }
    Some(perm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_best(w: &Matrix<f64>) -> f64 {
        fn rec(w: &Matrix<f64>, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == w.rows() {
                *best = best.max(acc);
                return;
            }
            for j in 0..w.cols() {
                if !used[j] {
                    used[j] = true;
                    rec(w, row + 1, used, acc + w[(row, j)], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::NEG_INFINITY;
        rec(w, 0, &mut vec![false; w.cols()], 0.0, &mut best);
        best
    }

    #[test]
    fn matches_brute_force_on_small_matrices() {
        let mut state = 17u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64) / (1u64 << 31) as f64
        };
        for n in 1..=5 {
            for _ in 0..20 {
                let w = Matrix::from_fn(n, n, |_, _| next() - 0.3);
                let a = max_weight_assignment(&w);
                let mut seen = a.clone();
                seen.sort_unstable();
                assert_eq!(seen, (0..n).collect::<Vec<_>>());
                let total: f64 = a.iter().enumerate().map(|(i, &j)| w[(i, j)]).sum();
                assert!((total - brute_force_best(&w)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn signed_permutation_distance_of_rotation() {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let r = Matrix::from_rows(&[vec![c, -c], vec![c, c]]).unwrap();
        let (dist, _, _) = signed_permutation_distance(&r);
        assert!((dist - c).abs() < 1e-15);
        let p = Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        let (dist, perm, signs) = signed_permutation_distance(&p);
        assert_eq!(dist, 0.0);
        assert_eq!(perm, vec![1, 0]);
        assert_eq!(signs, vec![-1.0, 1.0]);
    }
}
