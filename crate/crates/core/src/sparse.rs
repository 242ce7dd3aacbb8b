//! Sparse symmetric operator blocks.
//!
//! A block stores the upper triangle of a real symmetric matrix as sorted
//! `(row, col, value)` triplets with `row <= col`. The full (mirrored) pattern
//! is kept in compressed-row form for fast products.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::axpy_mat;

#[derive(Debug, Error, PartialEq)]
pub enum BlockError {
    #[error("block dimension must be positive")]
    EmptyDimension,
    #[error("entry ({row}, {col}) out of range for dimension {dim}")]
    IndexOutOfRange { row: usize, col: usize, dim: usize },
    #[error("duplicate entry at ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

/// One diagonal block of a sparse symmetric operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricOperatorBlock {
    label: String,
    dim: usize,
    upper: Vec<(usize, usize, f64)>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SymmetricOperatorBlock {
    /// Builds a block from triplets. Entries below the diagonal are mirrored
    /// into the upper triangle; a pair given in both orientations counts as a
    /// duplicate. Explicit zeros are dropped.
    pub fn from_triplets(
        label: impl Into<String>,
        dim: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self, BlockError> {
        if dim == 0 {
            return Err(BlockError::EmptyDimension);
        }
        let mut upper = Vec::new();
        for (i, j, v) in triplets {
            if i >= dim || j >= dim {
                return Err(BlockError::IndexOutOfRange { row: i, col: j, dim });
            }
            if !v.is_finite() {
                return Err(BlockError::NonFinite { row: i, col: j });
            }
            let (r, c) = if i <= j { (i, j) } else { (j, i) };
            upper.push((r, c, v));
        }
        upper.sort_by_key(|e| (e.0, e.1));
        for w in upper.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(BlockError::DuplicateEntry { row: w[0].0, col: w[0].1 });
            }
        }
        upper.retain(|&(_, _, v)| v != 0.0);
        Ok(Self::assemble(label.into(), dim, upper))
    }

    /// Builds a block from a dense matrix, reading only its upper triangle.
    pub fn from_dense_upper(label: impl Into<String>, a: &DMatrix<f64>) -> Result<Self, BlockError> {
        let n = a.nrows();
        let mut t = Vec::new();
        for j in 0..n {
            for i in 0..=j {
                if a[(i, j)] != 0.0 {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(label, n, t)
    }

    pub fn diagonal(label: impl Into<String>, diag: &[f64]) -> Result<Self, BlockError> {
        Self::from_triplets(
            label,
            diag.len(),
            diag.iter().enumerate().map(|(i, &v)| (i, i, v)),
        )
    }

    fn assemble(label: String, dim: usize, upper: Vec<(usize, usize, f64)>) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
        for &(i, j, v) in &upper {
            rows[i].push((j, v));
            if i != j {
                rows[j].push((i, v));
            }
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self { label, dim, upper, row_ptr, col_idx, values }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Stored upper-triangle triplets, sorted by `(row, col)`.
    pub fn upper_triplets(&self) -> &[(usize, usize, f64)] {
        &self.upper
    }

    pub fn nnz_upper(&self) -> usize {
        self.upper.len()
    }

    /// Entry `(i, j)` of the full symmetric matrix.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(p) => self.values[lo + p],
            Err(_) => 0.0,
        }
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.dim) {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[p] * x[self.col_idx[p]];
            }
            *yi = acc;
        }
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim);
        self.matvec_into(x.as_slice(), y.as_mut_slice());
        y
    }

    /// `A * X` for a dense block of column vectors.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim;
        let k = x.ncols();
        if k < 4 {
            let mut y = DMatrix::zeros(n, k);
            for (xs, ys) in x.as_slice().chunks_exact(n).zip(y.as_mut_slice().chunks_exact_mut(n)) {
                self.matvec_into(xs, ys);
            }
            return y;
        }
        // Row-major copies keep the inner loop contiguous over the columns.
        let xt = x.transpose();
        let xs = xt.as_slice();
        let mut yt = DMatrix::zeros(k, n);
        for (i, yrow) in yt.as_mut_slice().chunks_exact_mut(k).enumerate() {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let v = self.values[p];
                let j = self.col_idx[p];
                for (yv, xv) in yrow.iter_mut().zip(&xs[j * k..(j + 1) * k]) {
                    *yv += v * xv;
                }
            }
        }
        yt.transpose()
    }

    /// `Y^T = ((A - shift I) X)^T` with both blocks stored transposed, so
    /// that each row of `X` is a contiguous column of `xt`. `yt` must have
    /// the shape of `xt`.
    pub fn apply_transposed_into(&self, xt: &DMatrix<f64>, shift: f64, yt: &mut DMatrix<f64>) {
        let k = xt.nrows();
        assert_eq!(xt.ncols(), self.dim, "operand has the wrong number of rows");
        assert_eq!(yt.shape(), xt.shape(), "output shape differs from operand");
        let xs = xt.as_slice();
        for (i, yrow) in yt.as_mut_slice().chunks_exact_mut(k).enumerate() {
            for (yv, xv) in yrow.iter_mut().zip(&xs[i * k..(i + 1) * k]) {
                *yv = -shift * xv;
            }
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let v = self.values[p];
                let j = self.col_idx[p];
                for (yv, xv) in yrow.iter_mut().zip(&xs[j * k..(j + 1) * k]) {
                    *yv += v * xv;
                }
            }
        }
    }

    /// `(A - shift I) X`.
    pub fn apply_shifted(&self, x: &DMatrix<f64>, shift: f64) -> DMatrix<f64> {
        let mut y = self.apply(x);
        axpy_mat(&mut y, -shift, x, 1.0);
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.upper {
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
        a
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Interval containing every eigenvalue, from Gershgorin discs.
    pub fn gershgorin_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.dim {
            let mut center = 0.0;
            let mut radius = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[p] == i {
                    center = self.values[p];
                } else {
                    radius += self.values[p].abs();
                }
            }
            lo = lo.min(center - radius);
            hi = hi.max(center + radius);
        }
        (lo, hi)
    }

    /// Row-wise nonzeros of the full matrix as `(col, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (self.col_idx[p], self.values[p]))
    }

    /// `max |(A B - B A)_{ij}|` for two blocks of equal dimension.
    pub fn commutator_max(&self, other: &Self) -> f64 {
        let a = self.to_dense();
        let b = other.to_dense();
        (&a * &b - &b * &a).amax()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirrors_lower_entries() {
        let b = SymmetricOperatorBlock::from_triplets("t", 3, [(1, 0, 2.0), (2, 2, 5.0)]).unwrap();
        assert_eq!(b.get(0, 1), 2.0);
        assert_eq!(b.get(1, 0), 2.0);
        assert_eq!(b.upper_triplets(), &[(0, 1, 2.0), (2, 2, 5.0)]);
        let y = b.matvec(&DVector::from_vec(vec![1.0, 1.0, 1.0]));
        assert_eq!(y.as_slice(), &[2.0, 2.0, 5.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            SymmetricOperatorBlock::from_triplets("t", 2, [(0, 1, 1.0), (1, 0, 1.0)]),
            Err(BlockError::DuplicateEntry { row: 0, col: 1 })
        );
        assert!(matches!(
            SymmetricOperatorBlock::from_triplets("t", 2, [(0, 2, 1.0)]),
            Err(BlockError::IndexOutOfRange { .. })
        ));
        assert_eq!(
            SymmetricOperatorBlock::from_triplets("t", 0, []),
            Err(BlockError::EmptyDimension)
        );
    }

    #[test]
    fn gershgorin_contains_spectrum() {
        let b = SymmetricOperatorBlock::from_triplets("t", 2, [(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)])
            .unwrap();
        let (lo, hi) = b.gershgorin_bounds();
        assert!(lo <= 0.0 && hi >= 2.0);
    }
}
