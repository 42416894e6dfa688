//! Minimum-cost linear assignment.
//!
//! The solver runs the O(n^3) shortest-augmenting-path Hungarian method with
//! row/column potentials. The final potentials are an optimal dual, so every
//! optimal assignment uses only zero-reduced-cost ("tight") edges. A second
//! pass walks rows in order and swaps each row onto its smallest tight column
//! that still admits a perfect matching, which yields the lexicographically
//! smallest optimal assignment.

use crate::error::{Error, Result};

/// Dense `rows x cols` cost matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Validation(format!(
                "cost matrix has {} entries, expected {rows} x {cols}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "in cost matrix at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                actual: bad.len(),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Column chosen for each row; `None` only when there are more rows than columns.
    pub row_to_col: Vec<Option<usize>>,
    /// Sum of the chosen entries, excluding padding.
    pub total: f64,
}

impl Assignment {
    /// `(row, col)` pairs for matched rows.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row_to_col
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| (r, c)))
    }
}

/// Solves the assignment problem, padding to a square matrix internally.
///
/// Missing rows are padded with zero cost and missing columns with a large
/// sentinel; either padding adds the same constant to every perfect matching,
/// so the optimum over real entries is unaffected.
pub fn hungarian_min_cost(c: &CostMatrix) -> Result<Assignment> {
    if c.rows == 0 {
        return Ok(Assignment {
            row_to_col: Vec::new(),
            total: 0.0,
        });
    }
    let n = c.rows.max(c.cols);
    let scale = c.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let sentinel = scale * (n as f64 + 1.0);
    let mut a = vec![0.0; n * n];
    for r in 0..n {
        for col in 0..n {
            a[r * n + col] = if r < c.rows && col < c.cols {
                c.get(r, col)
            } else if r < c.rows {
                sentinel
            } else {
                0.0
            };
        }
    }

    let (mut col_of, u, v) = solve_square(&a, n);
    let eps = 1e-9 * scale.max(sentinel) * n as f64;
    lexicographic_refine(&a, n, &u, &v, eps, &mut col_of);

    let row_to_col: Vec<Option<usize>> = (0..c.rows)
        .map(|r| Some(col_of[r]).filter(|&col| col < c.cols))
        .collect();
    let total = row_to_col
        .iter()
        .enumerate()
        .filter_map(|(r, col)| col.map(|col| c.get(r, col)))
        .sum();
    Ok(Assignment { row_to_col, total })
}

/// Returns the row->column matching and the row/column potentials.
fn solve_square(a: &[f64], n: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    // 1-based indexing; column 0 and row 0 are virtual.
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
                if used[j] {
                    continue;
                }
                let cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
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
    let mut col_of = vec![0; n];
    for j in 1..=n {
        col_of[p[j] - 1] = j - 1;
    }
    (col_of, u[1..].to_vec(), v[1..].to_vec())
}

fn lexicographic_refine(a: &[f64], n: usize, u: &[f64], v: &[f64], eps: f64, col_of: &mut [usize]) {
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| a[i * n + j] - u[i] - v[j] <= eps || col_of[i] == j)
                .collect()
        })
        .collect();
    let mut row_of = vec![0; n];
    for (i, &j) in col_of.iter().enumerate() {
        row_of[j] = i;
    }

    for i in 0..n {
        for &c in &tight[i] {
            if c == col_of[i] {
                break;
            }
            let owner = row_of[c];
            if owner < i {
                continue;
            }
            let freed = col_of[i];
            let mut visited = vec![false; n];
            visited[c] = true;
            let mut path = Vec::new();
            if reroute(owner, freed, i, &tight, &row_of, &mut visited, &mut path) {
                // `path` holds (row, new column) pairs along the alternating path.
                for &(r, j) in &path {
                    col_of[r] = j;
                    row_of[j] = r;
                }
                col_of[i] = c;
                row_of[c] = i;
                break;
            }
        }
    }
}

/// Finds an alternating path that moves `row` to a new tight column, ending on
/// `target`. Columns held by rows `<= fixed` are off limits.
fn reroute(
    row: usize,
    target: usize,
    fixed: usize,
    tight: &[Vec<usize>],
    row_of: &[usize],
    visited: &mut [bool],
    path: &mut Vec<(usize, usize)>,
) -> bool {
    for &j in &tight[row] {
        if visited[j] {
            continue;
        }
        visited[j] = true;
        if j == target {
            path.push((row, j));
            return true;
        }
        let next = row_of[j];
        if next <= fixed {
            continue;
        }
        if reroute(next, target, fixed, tight, row_of, visited, path) {
            path.push((row, j));
            return true;
        }
    }
    false
}
