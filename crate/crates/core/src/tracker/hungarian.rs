//! Minimum-cost rectangular assignment with a deterministic tie-break.

/// Solves the square problem `c` (n x n, finite). Returns the column of each
/// row and the dual potentials `(u, v)` with `c[i][j] - u[i] - v[j] >= 0`.
fn solve_square(c: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = c.len();
    // 1-indexed shortest augmenting path formulation
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = c[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
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
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Tries to re-seat row `i` on column `j` in the tight graph while rows
/// `< i` stay fixed: moves `j`'s current owner along an alternating path to
/// the column `i` releases.
fn reseat(
    tight: &[Vec<bool>],
    row_to_col: &mut [usize],
    col_to_row: &mut [usize],
    i: usize,
    j: usize,
) -> bool {
    let n = tight.len();
    let freed = row_to_col[i];
    let displaced = col_to_row[j];
    if displaced < i {
        return false;
    }
    // BFS from the displaced row over rows > i looking for `freed`
    let mut prev_col = vec![usize::MAX; n];
    let mut seen_row = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    seen_row[displaced] = true;
    queue.push_back(displaced);
    let mut found = false;
    'bfs: while let Some(r) = queue.pop_front() {
        for col in 0..n {
            if !tight[r][col] || col == j || prev_col[col] != usize::MAX {
                continue;
            }
            prev_col[col] = r;
            if col == freed {
                found = true;
                break 'bfs;
            }
            let owner = col_to_row[col];
            if owner > i && !seen_row[owner] {
                seen_row[owner] = true;
                queue.push_back(owner);
            }
        }
    }
    if !found {
        return false;
    }
    // walk back: each row on the path takes the column it reached
    let mut col = freed;
    loop {
        let r = prev_col[col];
        let old = row_to_col[r];
        row_to_col[r] = col;
        col_to_row[col] = r;
        if r == displaced {
            break;
        }
        col = old;
    }
    row_to_col[i] = j;
    col_to_row[j] = i;
    true
}

/// Minimum-cost assignment of rows to columns. Non-finite entries are
/// forbidden. Every pair that can be made without raising the cost is made,
/// so with finite costs exactly `min(rows, cols)` pairs come back. Among
/// equal-cost optima the one whose (row, column) sequence is
/// lexicographically smallest wins. Returned pairs are sorted by row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let n = cost.len();
    let m = cost.first().map_or(0, |r| r.len());
    if n == 0 || m == 0 {
        return Vec::new();
    }
    assert!(cost.iter().all(|r| r.len() == m), "ragged cost matrix");
    let finite = || cost.iter().flatten().copied().filter(|c| c.is_finite());
    let lo = finite().fold(f64::INFINITY, f64::min);
    let lo = if lo.is_finite() { lo } else { 0.0 };
    let spread = finite().fold(0.0f64, |a, c| a.max(c - lo));
    // leaving a row and a column open costs 2 * skip > any real pair, and a
    // forbidden pair costs more than leaving both open
    let skip = spread + 1.0;
    let forbidden = 2.0 * skip + 1.0;
    let size = n + m;
    let mut c = vec![vec![0.0; size]; size];
    for i in 0..size {
        for j in 0..size {
            c[i][j] = match (i < n, j < m) {
                (true, true) => {
                    let x = cost[i][j];
                    if x.is_finite() {
                        x - lo
                    } else {
                        forbidden
                    }
                }
                (true, false) => {
                    if j - m == i {
                        skip
                    } else {
                        forbidden
                    }
                }
                (false, true) => {
                    if i - n == j {
                        skip
                    } else {
                        forbidden
                    }
                }
                (false, false) => 0.0,
            };
        }
    }
    let (mut row_to_col, u, v) = solve_square(&c);
    let eps = 1e-9 * (1.0 + forbidden);
    let tight: Vec<Vec<bool>> = (0..size)
        .map(|i| (0..size).map(|j| c[i][j] < forbidden && (c[i][j] - u[i] - v[j]).abs() <= eps).collect())
        .collect();
    let mut col_to_row = vec![0; size];
    for (r, &col) in row_to_col.iter().enumerate() {
        col_to_row[col] = r;
    }
    // complementary slackness: any perfect matching of the tight graph is
    // optimal, so walk rows in order taking the smallest feasible column
    for i in 0..n {
        for j in 0..size {
            if j == row_to_col[i] {
                break;
            }
            if tight[i][j] && reseat(&tight, &mut row_to_col, &mut col_to_row, i, j) {
                break;
            }
        }
    }
    (0..n)
        .filter(|&i| row_to_col[i] < m && cost[i][row_to_col[i]].is_finite())
        .map(|i| (i, row_to_col[i]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal() {
        assert_eq!(hungarian(&[vec![0.0, 0.9], vec![0.9, 0.0]]), vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn empty_sides() {
        assert!(hungarian(&[]).is_empty());
        assert!(hungarian(&[vec![], vec![]]).is_empty());
    }

    #[test]
    fn rectangular() {
        let c = vec![vec![0.5, 0.1, 0.9]];
        assert_eq!(hungarian(&c), vec![(0, 1)]);
        let c = vec![vec![0.5], vec![0.1], vec![0.9]];
        assert_eq!(hungarian(&c), vec![(1, 0)]);
    }

    #[test]
    fn forbidden_pairs() {
        let inf = f64::INFINITY;
        let c = vec![vec![inf, 0.2], vec![inf, 0.1]];
        assert_eq!(hungarian(&c), vec![(1, 1)]);
        assert!(hungarian(&[vec![inf]]).is_empty());
    }

    #[test]
    fn ties_break_lexicographically() {
        let c = vec![vec![1.0; 3]; 3];
        assert_eq!(hungarian(&c), vec![(0, 0), (1, 1), (2, 2)]);
        // both (0,1),(1,0) and (0,0),(1,1) cost 1; the latter is smaller
        let c = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        assert_eq!(hungarian(&c), vec![(0, 0), (1, 1)]);
        let c = vec![vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]];
        assert_eq!(hungarian(&c), vec![(0, 1), (1, 0)]);
    }
}
