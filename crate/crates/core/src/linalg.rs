//! Small linear-algebra building blocks: a CSR matrix for the sparse chaotic
//! recurrence, a row-major sample matrix, and a streaming Gram accumulator
//! feeding ridge solves.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compressed sparse row matrix. Column indices are sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Coordinate-triplet form used for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplets {
    pub n_rows: usize,
    pub n_cols: usize,
    pub rows: Vec<u32>,
    pub cols: Vec<u32>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Build from per-row `(column, value)` lists. Columns must be strictly
    /// increasing within a row and `< n_cols`.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n_rows = rows.len();
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for (i, row) in rows.into_iter().enumerate() {
            let mut last: Option<usize> = None;
            for (j, v) in row {
                if j >= n_cols || last.is_some_and(|l| j <= l) {
                    return Err(Error::InvalidArgument(format!(
                        "row {i}: column {j} out of order or out of range"
                    )));
                }
                last = Some(j);
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let rows = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .filter(|&j| m[(i, j)] != 0.0)
                    .map(|j| (j, m[(i, j)]))
                    .collect()
            })
            .collect();
        Self::from_rows(m.ncols(), rows).expect("dense matrix rows are ordered")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices of the nonzeros in row `i`.
    pub fn row_cols(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn row_values(&self, i: usize) -> &[f64] {
        &self.values[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn row_values_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// `out += scale * self * x`
    pub fn mul_acc(&self, scale: f64, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(out.len(), self.n_rows);
        for (i, o) in out.iter_mut().enumerate() {
            let range = self.row_ptr[i]..self.row_ptr[i + 1];
            let mut acc = 0.0;
            for (&j, &v) in self.col_idx[range.clone()].iter().zip(&self.values[range]) {
                acc += v * x[j];
            }
            *o += scale * acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (&j, &v) in self.row_cols(i).iter().zip(self.row_values(i)) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn to_triplets(&self) -> Triplets {
        let mut rows = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            rows.extend(std::iter::repeat_n(
                i as u32,
                self.row_ptr[i + 1] - self.row_ptr[i],
            ));
        }
        Triplets {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            rows,
            cols: self.col_idx.iter().map(|&c| c as u32).collect(),
            values: self.values.clone(),
        }
    }

    pub fn from_triplets(t: &Triplets) -> Result<Self> {
        if t.rows.len() != t.cols.len() || t.rows.len() != t.values.len() {
            return Err(Error::Container("triplet arrays differ in length".into()));
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); t.n_rows];
        for ((&r, &c), &v) in t.rows.iter().zip(&t.cols).zip(&t.values) {
            let r = r as usize;
            if r >= t.n_rows {
                return Err(Error::Container(format!("triplet row {r} out of range")));
            }
            rows[r].push((c as usize, v));
        }
        Self::from_rows(t.n_cols, rows).map_err(|e| Error::Container(e.to_string()))
    }
}

/// Row-major matrix of samples (one row per recorded time step).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SampleMatrix {
    n_cols: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn new(n_cols: usize) -> Self {
        Self {
            n_cols,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(n_cols: usize, rows: usize) -> Self {
        Self {
            n_cols,
            data: Vec::with_capacity(n_cols * rows),
        }
    }

    pub fn from_flat(n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if n_cols == 0 || !data.len().is_multiple_of(n_cols) {
            return Err(Error::InvalidArgument(format!(
                "flat buffer of {} values is not a multiple of {n_cols} columns",
                data.len()
            )));
        }
        Ok(Self { n_cols, data })
    }

    pub fn n_rows(&self) -> usize {
        self.data.len().checked_div(self.n_cols).unwrap_or(0)
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.n_cols, "row width mismatch");
        self.data.extend_from_slice(row);
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.n_cols.max(1))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Rows `start..end` of a copy restricted to the given column range.
    pub fn slice_rows(&self, start: usize, end: usize) -> SampleMatrix {
        SampleMatrix {
            n_cols: self.n_cols,
            data: self.data[start * self.n_cols..end * self.n_cols].to_vec(),
        }
    }
}

/// Streaming accumulator for `XᵀX` and `XᵀY` over row-major sample blocks.
#[derive(Debug, Clone)]
pub struct Gram {
    pub xtx: DMatrix<f64>,
    pub xty: DMatrix<f64>,
    pub n_samples: usize,
}

const GRAM_BLOCK: usize = 512;

impl Gram {
    pub fn new(n_features: usize, n_targets: usize) -> Self {
        Self {
            xtx: DMatrix::zeros(n_features, n_features),
            xty: DMatrix::zeros(n_features, n_targets),
            n_samples: 0,
        }
    }

    /// Add rows of `x` (row-major, `n_features` wide) paired with rows of `y`,
    /// each sample weighted by `weight`.
    pub fn add(&mut self, x: &[f64], y: &[f64], weight: f64) {
        let d = self.xtx.nrows();
        let k = self.xty.ncols();
        assert_eq!(x.len() % d, 0);
        let n = x.len() / d;
        assert_eq!(y.len(), n * k, "target rows do not match sample rows");
        let mut start = 0;
        while start < n {
            let end = (start + GRAM_BLOCK).min(n);
            let xb = DMatrix::from_row_slice(end - start, d, &x[start * d..end * d]);
            let yb = DMatrix::from_row_slice(end - start, k, &y[start * k..end * k]);
            self.xtx.gemm_tr(weight, &xb, &xb, 1.0);
            self.xty.gemm_tr(weight, &xb, &yb, 1.0);
            start = end;
        }
        self.n_samples += n;
    }

    /// Fold another accumulator of the same shape into this one.
    pub fn merge(&mut self, other: &Gram) {
        self.xtx += &other.xtx;
        self.xty += &other.xty;
        self.n_samples += other.n_samples;
    }

    /// Solve `(XᵀX + alpha I) W = XᵀY`.
    pub fn ridge(&self, alpha: f64, context: &'static str) -> Result<DMatrix<f64>> {
        ridge_solve(&self.xtx, &self.xty, alpha, context)
    }
}

/// Solve `(A + alpha I) W = B` for symmetric positive semi-definite `A`.
pub fn ridge_solve(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    alpha: f64,
    context: &'static str,
) -> Result<DMatrix<f64>> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "{context}: ridge parameter must be finite and >= 0, got {alpha}"
        )));
    }
    let mut m = a.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += alpha;
    }
    let chol = m.cholesky().ok_or(Error::Singular { context })?;
    let w = chol.solve(b);
    if w.iter().all(|v| v.is_finite()) {
        Ok(w)
    } else {
        Err(Error::Singular { context })
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn to_dvector(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}
