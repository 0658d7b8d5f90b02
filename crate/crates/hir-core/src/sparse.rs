//! Nonnegative sparse matrices in compressed-row storage.
//!
//! The model matrices (co-occurrence, adjusted cosine, the NCD factors X
//! and Y) are all row-(sub)stochastic and never store zeros. A row is
//! either empty ("dangling") or its values sum to one; the ranker treats
//! dangling mass by redirecting it to the user preference vector.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Sparse matrix in CSR layout. Stored values are strictly positive;
/// column indices within a row are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRowMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl SparseRowMatrix {
    /// Build from per-row entry lists. Entries must be sorted by column,
    /// in range, duplicate-free, and strictly positive (zeros are the
    /// caller's job to drop).
    pub fn from_rows(cols: usize, rows: Vec<Vec<(u32, f64)>>) -> Result<Self> {
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for (i, row) in rows.iter().enumerate() {
            let mut prev: Option<u32> = None;
            for &(j, v) in row {
                if j as usize >= cols {
                    return Err(Error::Validation(alloc::format!(
                        "row {i}: column {j} out of range (cols = {cols})"
                    )));
                }
                if prev.is_some_and(|p| p >= j) {
                    return Err(Error::Validation(alloc::format!(
                        "row {i}: columns not strictly increasing at {j}"
                    )));
                }
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::Validation(alloc::format!(
                        "row {i}, column {j}: value {v} not strictly positive and finite"
                    )));
                }
                prev = Some(j);
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).1.iter().sum()
    }

    pub fn row_is_empty(&self, i: usize) -> bool {
        self.row_ptr[i] == self.row_ptr[i + 1]
    }

    /// Divide every nonempty row by its sum.
    pub fn normalize_rows(&mut self) {
        for i in 0..self.rows {
            let sum = self.row_sum(i);
            if sum > 0.0 {
                for v in &mut self.values[self.row_ptr[i]..self.row_ptr[i + 1]] {
                    *v /= sum;
                }
            }
        }
    }

    /// True when every nonempty row sums to one within `tol`.
    pub fn is_row_stochastic(&self, tol: f64) -> bool {
        (0..self.rows).all(|i| self.row_is_empty(i) || libm::fabs(self.row_sum(i) - 1.0) <= tol)
    }

    /// Transpose into a fresh CSR matrix (counting sort, O(nnz + rows + cols)).
    pub fn transpose(&self) -> SparseRowMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &j in &self.col_idx {
            counts[j as usize + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let row_ptr = counts.clone();
        let mut col_idx = vec![0u32; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k] as usize;
                let slot = counts[j];
                counts[j] += 1;
                col_idx[slot] = i as u32;
                values[slot] = self.values[k];
            }
        }
        SparseRowMatrix {
            rows: self.cols,
            cols: self.rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// y = A x (gather along rows).
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j as usize];
            }
            y[i] = acc;
        }
    }

    /// acc += scale * (Aᵀ x), scattering along rows.
    pub fn add_scaled_tr_mul_vec(&self, x: &[f64], scale: f64, acc: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(acc.len(), self.cols);
        if scale == 0.0 {
            return;
        }
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            let xi = scale * x[i];
            if xi == 0.0 {
                continue;
            }
            for (&j, &v) in cols.iter().zip(vals) {
                acc[j as usize] += v * xi;
            }
        }
    }

    /// Dense row-major copy; intended for small test instances and debugging.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.rows * self.cols];
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                dense[i * self.cols + j as usize] = v;
            }
        }
        dense
    }

    /// Entries as (row, col, value) triples in row-major order.
    pub fn iter_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter()
                .zip(vals)
                .map(move |(&j, &v)| (i, j as usize, v))
        })
    }
}
