//! Maximum-weight perfect matching on square matrices.
//!
//! Small problems (`n <= 8`) are enumerated exhaustively; larger ones go
//! through the O(n³) Hungarian algorithm with row/column potentials.

use ndarray::{Array2, ArrayView2};

use crate::ot::{next_permutation, EXACT_MAX_N};

/// Permutation `σ` maximizing `Σ_i w[i][σ(i)]`. Returns the assignment
/// `row -> column`.
pub fn max_weight_perfect_matching(weights: ArrayView2<f64>) -> Vec<usize> {
    let (n, m) = weights.dim();
    assert_eq!(n, m, "matching needs a square matrix");
    if n <= EXACT_MAX_N {
        exhaustive(weights)
    } else {
        let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cost = weights.mapv(|w| max - w);
        hungarian_min_cost(cost.view())
    }
}

fn exhaustive(weights: ArrayView2<f64>) -> Vec<usize> {
    let n = weights.nrows();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_total = f64::NEG_INFINITY;
    loop {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| weights[[i, j]]).sum();
        if total > best_total {
            best_total = total;
            best.clone_from(&perm);
        }
        if !next_permutation(&mut perm) {
            return best;
        }
    }
}

/// Minimum-cost assignment (Hungarian / Kuhn–Munkres, shortest augmenting
/// path formulation).
pub fn hungarian_min_cost(cost: ArrayView2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment needs a square matrix");
    // 1-based internal indexing; column 0 is a virtual sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let i0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = col0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    col1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Sum of `w[i][σ(i)]`.
pub fn matching_weight(weights: &Array2<f64>, assignment: &[usize]) -> f64 {
    assignment.iter().enumerate().map(|(i, &j)| weights[[i, j]]).sum()
}
