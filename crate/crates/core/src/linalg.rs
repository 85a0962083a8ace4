//! Dense and sparse matrix storage, sparse LU factorization and dense
//! eigenvalue computation.
//!
//! The factorization and eigenvalue routines are thin wrappers over `faer`.

use faer::c64;
use faer::linalg::solvers::Solve;
use faer::prelude::*;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is singular to working precision at pivot {pivot}")]
    Singular { pivot: usize },
    #[error("eigenvalue iteration did not converge within its sweep budget")]
    NoConvergence,
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("sparse factorization failed: {0}")]
    Backend(String),
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite { row: k / cols.max(1), col: k % cols.max(1) });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let product = self.to_faer() * other.to_faer();
        Self::from_faer(product.as_ref())
    }

    /// Copies `block` into this matrix with its top-left corner at (r0, c0).
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &DenseMatrix) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols);
        for i in 0..block.rows {
            let dst = (r0 + i) * self.cols + c0;
            self.data[dst..dst + block.cols].copy_from_slice(block.row(i));
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub(crate) fn to_faer(&self) -> Mat<f64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }

    pub(crate) fn from_faer(m: MatRef<'_, f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    /// All eigenvalues, real or in complex-conjugate pairs.
    pub fn eigenvalues(&self) -> Result<Vec<c64>, LinalgError> {
        eigenvalues(self)
    }
}

/// Computes the full spectrum of a square dense matrix through Hessenberg
/// reduction and shifted QR.
pub fn eigenvalues(a: &DenseMatrix) -> Result<Vec<c64>, LinalgError> {
    if a.rows != a.cols {
        return Err(LinalgError::Dimension(format!("eigenvalues of a {}x{} matrix", a.rows, a.cols)));
    }
    if a.rows == 0 {
        return Ok(Vec::new());
    }
    if let Some(k) = a.data.iter().position(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite { row: k / a.cols, col: k % a.cols });
    }
    a.to_faer().eigenvalues().map_err(|_| LinalgError::NoConvergence)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DenseMatrix) -> Result<f64, LinalgError> {
    Ok(eigenvalues(a)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, LinalgError> {
        let mut counts = vec![0usize; rows + 1];
        for &(r, c, _) in triplets {
            if r >= rows || c >= cols {
                return Err(LinalgError::Dimension(format!(
                    "triplet ({r}, {c}) outside a {rows}x{cols} matrix"
                )));
            }
            counts[r + 1] += 1;
        }
        for i in 0..rows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols_raw = vec![0usize; triplets.len()];
        let mut vals_raw = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols_raw[next[r]] = c;
            vals_raw[next[r]] = v;
            next[r] += 1;
        }
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for r in 0..rows {
            order.clear();
            order.extend(counts[r]..counts[r + 1]);
            order.sort_by_key(|&k| cols_raw[k]);
            let mut last: Option<usize> = None;
            for &k in &order {
                let c = cols_raw[k];
                if last == Some(c) {
                    *values.last_mut().unwrap() += vals_raw[k];
                } else {
                    indices.push(c);
                    values.push(vals_raw[k]);
                    last = Some(c);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self { rows, cols, indptr, indices, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, indptr: vec![0; rows + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: values.to_vec(),
        }
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut t = Vec::new();
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let v = m.get(i, j);
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.rows(), m.cols(), &t).expect("indices in range")
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

    /// Iterates over the stored entries of row `i` as (col, value).
    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.rows {
            out.extend(self.row_entries(i).map(|(j, v)| (i, j, v)));
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.indptr[i]..self.indptr[i + 1];
        match self.indices[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.matvec_add(1.0, x, &mut y);
        y
    }

    /// A x with compensated dot products, accurate as if computed in twice
    /// the working precision.
    pub fn matvec_accurate(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| {
                let (mut s, mut c) = (0.0f64, 0.0f64);
                for k in self.indptr[i]..self.indptr[i + 1] {
                    let p = self.values[k] * x[self.indices[k]];
                    let perr = self.values[k].mul_add(x[self.indices[k]], -p);
                    let t = s + p;
                    let z = t - s;
                    c += (s - (t - z)) + (p - z) + perr;
                    s = t;
                }
                s + c
            })
            .collect()
    }

    /// y += alpha * A x
    pub fn matvec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        assert_eq!(y.len(), self.rows, "matvec dimension mismatch");
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            *yi += alpha * s;
        }
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.cols, self.rows, &t).expect("indices in range")
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// diag(d) * A
    pub fn scale_rows(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.rows);
        let mut out = self.clone();
        for i in 0..self.rows {
            for k in out.indptr[i]..out.indptr[i + 1] {
                out.values[k] *= d[i];
            }
        }
        out
    }

    /// A * diag(d)
    pub fn scale_cols(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.cols);
        let mut out = self.clone();
        for k in 0..out.values.len() {
            out.values[k] *= d[out.indices[k]];
        }
        out
    }

    /// alpha * A + beta * B
    pub fn lin_comb(alpha: f64, a: &Self, beta: f64, b: &Self) -> Self {
        assert_eq!((a.rows, a.cols), (b.rows, b.cols), "sum dimension mismatch");
        let mut t: Vec<_> = a.triplets().into_iter().map(|(i, j, v)| (i, j, alpha * v)).collect();
        t.extend(b.triplets().into_iter().map(|(i, j, v)| (i, j, beta * v)));
        Self::from_triplets(a.rows, a.cols, &t).expect("indices in range")
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::lin_comb(1.0, self, 1.0, other)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::lin_comb(1.0, self, -1.0, other)
    }

    /// Sparse product A * B.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut acc = vec![0.0; other.cols];
        let mut mark = vec![usize::MAX; other.cols];
        let mut pattern: Vec<usize> = Vec::new();
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..self.rows {
            pattern.clear();
            for (k, a) in self.row_entries(i) {
                for (j, b) in other.row_entries(k) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        pattern.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            pattern.sort_unstable();
            for &j in &pattern {
                indices.push(j);
                values.push(acc[j]);
            }
            indptr.push(indices.len());
        }
        Self { rows: self.rows, cols: other.cols, indptr, indices, values }
    }

    /// Kronecker product A ⊗ B.
    pub fn kron(&self, other: &Self) -> Self {
        let mut t = Vec::with_capacity(self.nnz() * other.nnz());
        for (i, j, a) in self.triplets() {
            for (k, l, b) in other.triplets() {
                t.push((i * other.rows + k, j * other.cols + l, a * b));
            }
        }
        Self::from_triplets(self.rows * other.rows, self.cols * other.cols, &t)
            .expect("indices in range")
    }

    /// Stacks blocks given as a row-major grid; `None` entries are zero blocks.
    pub fn block(grid: &[Vec<Option<&SparseMatrix>>]) -> Result<Self, LinalgError> {
        let nbr = grid.len();
        let nbc = grid.first().map_or(0, |r| r.len());
        let mut row_sizes = vec![None; nbr];
        let mut col_sizes = vec![None; nbc];
        for (bi, row) in grid.iter().enumerate() {
            if row.len() != nbc {
                return Err(LinalgError::Dimension("ragged block grid".into()));
            }
            for (bj, m) in row.iter().enumerate() {
                if let Some(m) = m {
                    for (slot, size) in [(&mut row_sizes[bi], m.rows), (&mut col_sizes[bj], m.cols)] {
                        match slot {
                            Some(s) if *s != size => {
                                return Err(LinalgError::Dimension(format!(
                                    "block ({bi}, {bj}) has inconsistent size"
                                )))
                            }
                            _ => *slot = Some(size),
                        }
                    }
                }
            }
        }
        let row_sizes: Vec<usize> = row_sizes.into_iter().map(|s| s.unwrap_or(0)).collect();
        let col_sizes: Vec<usize> = col_sizes.into_iter().map(|s| s.unwrap_or(0)).collect();
        let row_off: Vec<usize> = offsets(&row_sizes);
        let col_off: Vec<usize> = offsets(&col_sizes);
        let mut t = Vec::new();
        for (bi, row) in grid.iter().enumerate() {
            for (bj, m) in row.iter().enumerate() {
                if let Some(m) = m {
                    t.extend(m.triplets().into_iter().map(|(i, j, v)| (i + row_off[bi], j + col_off[bj], v)));
                }
            }
        }
        Self::from_triplets(row_off[nbr], col_off[nbc], &t)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.triplets() {
            m.set(i, j, v);
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row_entries(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>, LinalgError> {
        let t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.rows, self.cols, &t)
            .map_err(|e| LinalgError::Backend(format!("{e:?}")))
    }
}

fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut off = vec![0];
    for s in sizes {
        off.push(off.last().unwrap() + s);
    }
    off
}

/// Reusable sparse LU factorization of a square matrix.
pub struct LuFactorization {
    n: usize,
    lu: Lu<usize, f64>,
}

impl std::fmt::Debug for LuFactorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LuFactorization").field("n", &self.n).finish()
    }
}

/// Factorizes a square sparse matrix.
///
/// Structural singularity is reported with the failing pivot index. Numerical
/// singularity is detected by a probe solve against a known solution; the
/// reported pivot is the first row whose recovered value is non-finite or
/// inaccurate.
pub fn lu_factor(a: &SparseMatrix) -> Result<LuFactorization, LinalgError> {
    if a.rows != a.cols {
        return Err(LinalgError::Dimension(format!("LU of a {}x{} matrix", a.rows, a.cols)));
    }
    if let Some((i, j, _)) = a.triplets().into_iter().find(|t| !t.2.is_finite()) {
        return Err(LinalgError::NonFinite { row: i, col: j });
    }
    let n = a.rows;
    let lu = a.to_faer()?.sp_lu().map_err(|e| match e {
        faer::sparse::linalg::LuError::SymbolicSingular { index } => LinalgError::Singular { pivot: index },
        other => LinalgError::Backend(format!("{other:?}")),
    })?;
    let fact = LuFactorization { n, lu };
    // Probe: x = (1, 2, ..., n)/n must be recovered from b = A x.
    let x: Vec<f64> = (0..n).map(|i| (i + 1) as f64 / n as f64).collect();
    let b = a.matvec(&x);
    let y = fact.solve(&b);
    let tol = 1e-6;
    if let Some(k) = (0..n).find(|&k| !y[k].is_finite() || (y[k] - x[k]).abs() > tol) {
        return Err(LinalgError::Singular { pivot: k });
    }
    Ok(fact)
}

impl LuFactorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n, "solve dimension mismatch");
        let mut rhs = MatMut::from_column_major_slice_mut(b, self.n, 1);
        self.lu.solve_in_place(rhs.as_mut());
    }

    /// Solves A X = B for a dense right-hand side block.
    pub fn solve_dense(&self, b: &DenseMatrix) -> DenseMatrix {
        assert_eq!(b.rows(), self.n, "solve dimension mismatch");
        let rhs = b.to_faer();
        let x = self.lu.solve(&rhs);
        DenseMatrix::from_faer(x.as_ref())
    }
}

/// Scaled residual ‖Ax−b‖∞ / (‖A‖∞‖x‖∞ + ‖b‖∞).
pub fn scaled_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r = ax.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    let nx = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let nb = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = a.norm_inf() * nx + nb;
    if scale == 0.0 {
        r
    } else {
        r / scale
    }
}

/// Euclidean dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Weighted squared norm Σ w_i u_i².
pub fn weighted_norm_sq(u: &[f64], w: &[f64]) -> f64 {
    u.iter().zip(w).map(|(x, wi)| wi * x * x).sum()
}
