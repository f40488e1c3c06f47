//! Minimum-cost bipartite assignment (Hungarian algorithm with potentials).

use ndarray::{Array2, ArrayView2};

/// Solves the rectangular assignment problem for `cost` (rows x cols).
///
/// Returns, for every row, the column it is matched to. When there are more
/// rows than columns some rows stay unmatched (`None`). The total cost of the
/// matched pairs is minimal.
pub fn min_cost_assignment(cost: ArrayView2<'_, f64>) -> Vec<Option<usize>> {
    let (rows, cols) = cost.dim();
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows > cols {
        let transposed = solve(cost.t());
        let mut out = vec![None; rows];
        for (c, r) in transposed.into_iter().enumerate() {
            out[r] = Some(c);
        }
        return out;
    }
    solve(cost).into_iter().map(Some).collect()
}

/// Same as [`min_cost_assignment`] but maximizes the total weight.
pub fn max_weight_assignment(weight: ArrayView2<'_, f64>) -> Vec<Option<usize>> {
    let neg: Array2<f64> = weight.mapv(|w| -w);
    min_cost_assignment(neg.view())
}

/// Total cost of an assignment.
pub fn assignment_cost(cost: ArrayView2<'_, f64>, assignment: &[Option<usize>]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| cost[[r, c]]))
        .sum()
}

// rows <= cols; returns the column of each row.
fn solve(cost: ArrayView2<'_, f64>) -> Vec<usize> {
    let (n, m) = cost.dim();
    debug_assert!(n <= m);
    // 1-based arrays, index 0 is the virtual root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut row_of = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut col_of = vec![0usize; n];
    for j in 1..=m {
        if row_of[j] != 0 {
            col_of[row_of[j] - 1] = j - 1;
        }
    }
    col_of
}
