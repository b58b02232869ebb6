//! Dense real-matrix primitives: centering, symmetric eigendecomposition,
//! pseudoinverses and numerical rank.
//!
//! Storage and the heavy kernels (symmetric eigensolver, SVD) come from
//! `nalgebra`; this module adds the validation, ordering and truncation rules
//! the rest of the crate relies on.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{FairError, Result};

/// Relative truncation tolerance used for rank decisions and pseudoinverses.
pub const DEFAULT_RTOL: f64 = 1e-10;

/// Relative asymmetry accepted by [`sym_eig`].
const SYMMETRY_RTOL: f64 = 1e-10;

/// A dense matrix of finite 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix(DMatrix<f64>);

impl DenseMatrix {
    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(FairError::InvalidDimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Self::from_matrix(DMatrix::from_row_slice(rows, cols, entries))
    }

    /// Wraps an existing matrix, rejecting NaN and infinities.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
            return Err(FairError::NonFinite(format!(
                "matrix entry {pos} (column-major) is {}",
                m[pos]
            )));
        }
        Ok(Self(m))
    }

    pub(crate) fn wrap(m: DMatrix<f64>) -> Self {
        debug_assert!(m.iter().all(|v| v.is_finite()));
        Self(m)
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.0.transpose().as_slice().to_vec()
    }

    pub fn is_square(&self) -> bool {
        self.0.nrows() == self.0.ncols()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }
}

impl Deref for DenseMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Eigenpairs of a symmetric matrix, largest eigenvalue first.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub values: Vec<f64>,
    /// One column per eigenvalue, orthonormal.
    pub vectors: DenseMatrix,
}

/// `H = I - (1/n) 11ᵀ`.
pub fn centering_matrix(n: usize) -> Result<DenseMatrix> {
    if n == 0 {
        return Err(FairError::InvalidDimension(
            "centering matrix needs n >= 1".into(),
        ));
    }
    let inv = 1.0 / n as f64;
    Ok(DenseMatrix::wrap(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 - inv
        } else {
            -inv
        }
    })))
}

/// `H K H`, computed by subtracting row, column and grand means.
pub fn center_gram(k: &DenseMatrix) -> Result<DenseMatrix> {
    if !k.is_square() {
        return Err(FairError::InvalidDimension(format!(
            "center_gram needs a square matrix, got {}x{}",
            k.nrows(),
            k.ncols()
        )));
    }
    let n = k.nrows();
    if n == 0 {
        return Err(FairError::InvalidDimension("empty Gram matrix".into()));
    }
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| k.row(i).sum() / nf).collect();
    let col_means: Vec<f64> = (0..n).map(|j| k.column(j).sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    let mut out = DMatrix::from_fn(n, n, |i, j| k[(i, j)] - row_means[i] - col_means[j] + grand);
    // exact symmetry for symmetric input
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(DenseMatrix::wrap(out))
}

/// Maximum absolute asymmetry `max |M_ij - M_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Full eigendecomposition of a symmetric matrix, values sorted descending.
pub fn sym_eig(m: &DenseMatrix) -> Result<EigenResult> {
    if !m.is_square() {
        return Err(FairError::InvalidDimension(format!(
            "sym_eig needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(EigenResult {
            values: Vec::new(),
            vectors: DenseMatrix::zeros(0, 0),
        });
    }
    let allowed = SYMMETRY_RTOL * m.max_abs().max(f64::MIN_POSITIVE);
    let asym = asymmetry(m);
    if asym > allowed {
        return Err(FairError::NotSymmetric {
            asymmetry: asym,
            allowed,
        });
    }
    let sym = faer::Mat::<f64>::from_fn(n, n, |r, c| 0.5 * (m[(r, c)] + m[(c, r)]));
    let eig = sym
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| FairError::Numeric(format!("symmetric eigensolver failed: {e:?}")))?;
    let (s, u) = (eig.S().column_vector(), eig.U());

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let values = order.iter().map(|&i| s[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| u[(r, order[c])]);
    Ok(EigenResult {
        values,
        vectors: DenseMatrix::wrap(vectors),
    })
}

/// Number of values strictly above `rtol * max(values, 0)`.
pub fn numerical_rank(values: &[f64], rtol: f64) -> usize {
    let top = values.iter().copied().fold(0.0f64, f64::max);
    if top <= 0.0 {
        return 0;
    }
    let cut = rtol * top;
    values.iter().filter(|&&v| v > cut).count()
}

/// Moore-Penrose pseudoinverse via SVD. Singular values at or below
/// `rtol * sigma_max` are treated as zero.
pub fn pinv(m: &DenseMatrix, rtol: f64) -> Result<DenseMatrix> {
    check_rtol(rtol)?;
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(DenseMatrix::zeros(cols, rows));
    }
    let svd = SVD::new(m.as_matrix().clone(), true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma_max = svd.singular_values.max();
    if sigma_max <= 0.0 {
        return Ok(DenseMatrix::zeros(cols, rows));
    }
    let cut = rtol * sigma_max;
    let mut out = DMatrix::zeros(cols, rows);
    for (idx, &s) in svd.singular_values.iter().enumerate() {
        if s > cut {
            let v_col = v_t.row(idx).transpose();
            let u_col = u.column(idx);
            out += (v_col / s) * u_col.transpose();
        }
    }
    Ok(DenseMatrix::wrap(out))
}

/// Pseudoinverse of a symmetric matrix through its eigendecomposition.
/// Eigenvalues with `|value| <= rtol * max|value|` are dropped.
pub fn pinv_sym(m: &DenseMatrix, rtol: f64) -> Result<DenseMatrix> {
    check_rtol(rtol)?;
    let eig = sym_eig(m)?;
    let n = m.nrows();
    let top = eig.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if top <= 0.0 {
        return Ok(DenseMatrix::zeros(n, n));
    }
    let cut = rtol * top;
    let kept: Vec<usize> = (0..n).filter(|&i| eig.values[i].abs() > cut).collect();
    let v = DMatrix::from_fn(n, kept.len(), |r, c| eig.vectors[(r, kept[c])]);
    let inv = DVector::from_iterator(kept.len(), kept.iter().map(|&i| 1.0 / eig.values[i]));
    let scaled = DMatrix::from_fn(n, kept.len(), |r, c| v[(r, c)] * inv[c]);
    Ok(DenseMatrix::wrap(scaled * v.transpose()))
}

fn check_rtol(rtol: f64) -> Result<()> {
    if !(rtol > 0.0 && rtol.is_finite()) {
        return Err(FairError::Range(format!("rtol must be positive, got {rtol}")));
    }
    Ok(())
}

/// `m v`.
pub fn mat_vec(m: &DenseMatrix, v: &[f64]) -> Result<Vec<f64>> {
    if m.ncols() != v.len() {
        return Err(FairError::InvalidDimension(format!(
            "{}x{} matrix times vector of length {}",
            m.nrows(),
            m.ncols(),
            v.len()
        )));
    }
    Ok((m.as_matrix() * DVector::from_column_slice(v)).as_slice().to_vec())
}

/// Frobenius norm, the default matrix norm for tolerance scaling.
pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}
