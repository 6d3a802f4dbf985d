//! Compressed-row storage for the transition and survivor matrices.
//!
//! Rows keep their column indices sorted ascending. Products accumulate in a
//! fixed order (left operand nonzeros in column order, then right operand
//! nonzeros in column order) so results do not depend on thread scheduling.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from per-row `(column, value)` lists. Entries are
    /// sorted by column; duplicate columns are summed; explicit zeros dropped.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                assert!(c < ncols, "column {c} out of range for {ncols} columns");
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            // drop zeros introduced by the input or by cancellation
            let start = *row_ptr.last().unwrap();
            let mut w = start;
            for r in start..col_idx.len() {
                if values[r] != 0.0 {
                    col_idx[w] = col_idx[r];
                    values[w] = values[r];
                    w += 1;
                }
            }
            col_idx.truncate(w);
            values.truncate(w);
            row_ptr.push(w);
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        Self::from_rows(
            ncols,
            rows.iter()
                .map(|r| {
                    assert_eq!(r.len(), ncols, "ragged dense matrix");
                    r.iter().copied().enumerate().collect()
                })
                .collect(),
        )
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Nonzeros of row `i` in ascending column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn row_len(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.nrows)
            .map(|i| {
                let mut r = vec![0.0; self.ncols];
                for (j, v) in self.row(i) {
                    r[j] = v;
                }
                r
            })
            .collect()
    }

    /// `self · v` for a column vector `v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.ncols);
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, a)| a * v[j]).sum())
            .collect()
    }

    /// `x · self` for a row vector `x`.
    pub fn vec_mul(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut out = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (j, a) in self.row(i) {
                out[j] += xi * a;
            }
        }
        out
    }

    /// Row-vector times matrix on a sparse operand, using `acc` as scratch.
    pub(crate) fn sparse_vec_mul(
        &self,
        x: &[(usize, f64)],
        acc: &mut Accumulator,
    ) -> Vec<(usize, f64)> {
        for &(i, xi) in x {
            for (j, a) in self.row(i) {
                acc.add(j, xi * a);
            }
        }
        acc.drain()
    }

    /// Sparse product `self · rhs`, computed row by row.
    pub fn matmul(&self, rhs: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, rhs.nrows, "dimension mismatch in matmul");
        let mut acc = Accumulator::new(rhs.ncols);
        let rows = (0..self.nrows)
            .map(|i| {
                let x: Vec<(usize, f64)> = self.row(i).collect();
                rhs.sparse_vec_mul(&x, &mut acc)
            })
            .collect();
        CsrMatrix::from_rows(rhs.ncols, rows)
    }

    /// Largest absolute entrywise difference; matrices must share a shape.
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            let mut a = self.row(i).peekable();
            let mut b = other.row(i).peekable();
            loop {
                let d = match (a.peek().copied(), b.peek().copied()) {
                    (None, None) => break,
                    (Some((_, va)), None) => {
                        a.next();
                        va
                    }
                    (None, Some((_, vb))) => {
                        b.next();
                        vb
                    }
                    (Some((ja, va)), Some((jb, vb))) => {
                        if ja == jb {
                            a.next();
                            b.next();
                            va - vb
                        } else if ja < jb {
                            a.next();
                            va
                        } else {
                            b.next();
                            vb
                        }
                    }
                };
                worst = worst.max(d.abs());
            }
        }
        worst
    }
}

/// Dense scatter buffer with a touched-index list.
pub(crate) struct Accumulator {
    dense: Vec<f64>,
    seen: Vec<bool>,
    touched: Vec<usize>,
}

impl Accumulator {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            dense: vec![0.0; n],
            seen: vec![false; n],
            touched: Vec::new(),
        }
    }

    #[inline]
    pub(crate) fn add(&mut self, j: usize, v: f64) {
        if !self.seen[j] {
            self.seen[j] = true;
            self.touched.push(j);
        }
        self.dense[j] += v;
    }

    /// Returns accumulated entries sorted by index and resets the buffer.
    pub(crate) fn drain(&mut self) -> Vec<(usize, f64)> {
        self.touched.sort_unstable();
        let mut out = Vec::with_capacity(self.touched.len());
        for &j in &self.touched {
            let v = self.dense[j];
            if v != 0.0 {
                out.push((j, v));
            }
            self.dense[j] = 0.0;
            self.seen[j] = false;
        }
        self.touched.clear();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_rows_sorts_and_merges() {
        let m = CsrMatrix::from_rows(3, vec![vec![(2, 0.5), (0, 0.25), (2, 0.25)], vec![]]);
        assert_eq!(m.row(0).collect::<Vec<_>>(), vec![(0, 0.25), (2, 0.75)]);
        assert_eq!(m.row_len(1), 0);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn matmul_matches_dense() {
        let a = CsrMatrix::from_dense(&[vec![0.6, 0.2], vec![0.2, 0.7]]);
        let sq = a.matmul(&a).to_dense();
        let expect = [[0.40, 0.26], [0.26, 0.53]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((sq[i][j] - expect[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn vector_products() {
        let a = CsrMatrix::from_dense(&[vec![0.6, 0.2], vec![0.2, 0.7]]);
        assert_eq!(a.mul_vec(&[1.0, 0.0]), vec![0.6, 0.2]);
        let x = a.vec_mul(&[0.5, 0.5]);
        assert!((x[0] - 0.4).abs() < 1e-15 && (x[1] - 0.45).abs() < 1e-15);
    }
}
