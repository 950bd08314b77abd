//! Exact maximum-weight bipartite matching (Hungarian algorithm with
//! potentials, O(n^3)).

/// Maximum-weight bipartite matching for a rectangular non-negative weight
/// matrix (`weights[row][col]`). Returns the total matched weight and the
/// column assigned to each row (`None` for rows left unmatched by padding).
///
/// Weights must be non-negative: the matrix is zero-padded to a square and
/// solved as a perfect matching, which coincides with the unrestricted
/// maximum-weight matching when no edge has negative weight.
pub fn max_weight_matching(weights: &[Vec<f64>]) -> (f64, Vec<Option<usize>>) {
    let n_rows = weights.len();
    let n_cols = weights.first().map(|r| r.len()).unwrap_or(0);
    if n_rows == 0 || n_cols == 0 {
        return (0.0, vec![None; n_rows]);
    }
    let n = n_rows.max(n_cols);
    // Minimization on negated weights; padded cells cost 0.
    let cost = |i: usize, j: usize| -> f64 {
        if i < n_rows && j < n_cols {
            -weights[i][j]
        } else {
            0.0
        }
    };

    const INF: f64 = f64::INFINITY;
    // 1-indexed potentials/assignment arrays, e-maxx layout.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j] = row matched to column j
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
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
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![None; n_rows];
    let mut total = 0.0;
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i - 1 < n_rows && j - 1 < n_cols {
            assignment[i - 1] = Some(j - 1);
            total += weights[i - 1][j - 1];
        }
    }
    (total, assignment)
}

#[cfg(test)]
pub(crate) fn brute_force_max_matching(weights: &[Vec<f64>]) -> f64 {
    // Exhaustive search over all injective row -> column maps.
    fn rec(weights: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
        if row == weights.len() {
            return 0.0;
        }
        // Option: leave this row unmatched.
        let mut best = rec(weights, row + 1, used);
        for col in 0..used.len() {
            if !used[col] {
                used[col] = true;
                let w = weights[row][col] + rec(weights, row + 1, used);
                used[col] = false;
                if w > best {
                    best = w;
                }
            }
        }
        best
    }
    let n_cols = weights.first().map(|r| r.len()).unwrap_or(0);
    rec(weights, 0, &mut vec![false; n_cols])
}
