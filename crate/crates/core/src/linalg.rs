//! Minimal row-major sparse matrix used for segment design matrices.
//!
//! Rows are short (≤ 23 nonzeros: two lineups plus the home column), so a
//! per-row coordinate list beats a general sparse format here. Normal
//! matrices are accumulated densely; the player count stays small enough
//! for dense Cholesky downstream.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseRowMatrix {
    ncols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRowMatrix {
    pub fn new(ncols: usize) -> Self {
        SparseRowMatrix {
            ncols,
            rows: Vec::new(),
        }
    }

    pub fn with_capacity(ncols: usize, nrows: usize) -> Self {
        SparseRowMatrix {
            ncols,
            rows: Vec::with_capacity(nrows),
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Append a row given as (column, value) pairs. Columns must be in range
    /// and distinct; entries are stored sorted by column.
    pub fn push_row(&mut self, mut entries: Vec<(usize, f64)>) {
        debug_assert!(entries.iter().all(|&(c, _)| c < self.ncols));
        entries.sort_unstable_by_key(|&(c, _)| c);
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        self.rows.push(entries);
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[(usize, f64)]> {
        self.rows.iter().map(|r| r.as_slice())
    }

    /// Dot product of row `i` with a dense vector.
    pub fn row_dot(&self, i: usize, v: &DVector<f64>) -> f64 {
        self.rows[i].iter().map(|&(c, x)| x * v[c]).sum()
    }

    /// Σᵢ wᵢ · xᵢ xᵢᵀ accumulated densely (upper triangle mirrored).
    pub fn weighted_gram(&self, weights: &[f64]) -> DMatrix<f64> {
        assert_eq!(weights.len(), self.nrows());
        let mut g = DMatrix::zeros(self.ncols, self.ncols);
        for (row, &w) in self.rows.iter().zip(weights) {
            for &(ci, xi) in row {
                for &(cj, xj) in row {
                    if cj >= ci {
                        g[(ci, cj)] += w * xi * xj;
                    }
                }
            }
        }
        for i in 0..self.ncols {
            for j in (i + 1)..self.ncols {
                g[(j, i)] = g[(i, j)];
            }
        }
        g
    }

    /// Σᵢ wᵢ · yᵢ · xᵢ.
    pub fn weighted_rhs(&self, y: &DVector<f64>, weights: &[f64]) -> DVector<f64> {
        assert_eq!(y.len(), self.nrows());
        assert_eq!(weights.len(), self.nrows());
        let mut b = DVector::zeros(self.ncols);
        for (i, row) in self.rows.iter().enumerate() {
            let wy = weights[i] * y[i];
            for &(c, x) in row {
                b[c] += wy * x;
            }
        }
        b
    }

    /// Coordinate triplets (row, col, value) in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(c, x)| (i, c, x)))
    }

    /// Densify; test and debug use only.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols);
        for (i, j, x) in self.triplets() {
            m[(i, j)] = x;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gram_and_rhs_match_dense_computation() {
        let mut x = SparseRowMatrix::new(3);
        x.push_row(vec![(0, 1.0), (2, -1.0)]);
        x.push_row(vec![(1, 1.0)]);
        x.push_row(vec![(0, -1.0), (1, 1.0), (2, 1.0)]);
        let w = vec![1.0, 0.5, 2.0];
        let y = DVector::from_vec(vec![1.0, -1.0, 2.0]);

        let xd = x.to_dense();
        let wd = DMatrix::from_diagonal(&DVector::from_vec(w.clone()));
        let gram_dense = xd.transpose() * &wd * &xd;
        let rhs_dense = xd.transpose() * &wd * &y;

        assert_abs_diff_eq!(x.weighted_gram(&w), gram_dense, epsilon = 1e-12);
        assert_abs_diff_eq!(x.weighted_rhs(&y, &w), rhs_dense, epsilon = 1e-12);
    }
}
