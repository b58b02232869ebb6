//! The mean-parity fair subspace of the joint RKHS.
//!
//! Functions `g = Φ c` in the span of the training features are MP-fair on the
//! training sample exactly when they are orthogonal (in the RKHS) to the range
//! of the empirical cross-covariance operator between `(x, s)` and `s`. That
//! range is spanned by `Φ H b` for `b` in the column space of the centered
//! sensitive Gram `H K_S H`. This module computes a K-orthonormal basis of it
//! and the coefficient-space projector `P = I - A Aᵀ K` that removes it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::numerics::{center_gram, numerical_rank, sym_eig, DenseMatrix};

/// Result of the sensitive-kernel identifiability check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assumption1Report {
    pub satisfied: bool,
    pub centered_rank: usize,
    pub k: usize,
}

/// Column space of the centered sensitive Gram `H K_S H`, computed once and
/// shared by the assumption check and the basis construction.
#[derive(Debug, Clone)]
pub struct SensitiveFactor {
    /// Orthonormal columns spanning the range of `H K_S H`.
    pub range: DenseMatrix,
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
}

impl SensitiveFactor {
    pub fn from_gram(k_s: &DenseMatrix, rtol: f64) -> Result<Self> {
        let centered = center_gram(k_s)?;
        let eig = sym_eig(&centered)?;
        let rank = numerical_rank(&eig.values, rtol);
        let n = k_s.nrows();
        let range = DMatrix::from_fn(n, rank, |r, c| eig.vectors[(r, c)]);
        Ok(Self {
            range: DenseMatrix::wrap(range),
            eigenvalues: eig.values,
            rank,
        })
    }
}

fn check_groups(group_codes: &[usize], k: usize) -> Result<()> {
    let mut counts = vec![0usize; k];
    for &g in group_codes {
        if g >= k {
            return Err(FairError::Range(format!("group code {g} >= k = {k}")));
        }
        counts[g] += 1;
    }
    if let Some(group) = counts.iter().position(|&c| c == 0) {
        return Err(FairError::MissingGroup { group, k });
    }
    Ok(())
}

/// Verifies that the centered sensitive features of the `k` groups are
/// linearly independent, i.e. `rank(H K_S H) = k - 1`.
pub fn check_assumption1(
    k_s: &DenseMatrix,
    group_codes: &[usize],
    k: usize,
    rtol: f64,
) -> Result<Assumption1Report> {
    let factor = SensitiveFactor::from_gram(k_s, rtol)?;
    check_assumption1_with(&factor, group_codes, k)
}

pub fn check_assumption1_with(
    factor: &SensitiveFactor,
    group_codes: &[usize],
    k: usize,
) -> Result<Assumption1Report> {
    if group_codes.len() != factor.range.nrows() {
        return Err(FairError::InvalidDimension(format!(
            "{} group codes for a {}-row Gram",
            group_codes.len(),
            factor.range.nrows()
        )));
    }
    if k == 0 {
        return Err(FairError::Range("group count must be >= 1".into()));
    }
    check_groups(group_codes, k)?;
    Ok(Assumption1Report {
        satisfied: factor.rank == k - 1,
        centered_rank: factor.rank,
        k,
    })
}

/// K-orthonormal basis of the unfair directions.
#[derive(Debug, Clone)]
pub struct FairBasis {
    /// `n x m`, column `j` holds the coefficients `a_j` of `θ_j = Φ a_j`.
    pub coeffs: DenseMatrix,
    /// Eigenvalues of the empirical cross-covariance product, descending.
    pub eigenvalues: Vec<f64>,
    pub m: usize,
    pub n: usize,
}

impl FairBasis {
    pub fn empty(n: usize) -> Self {
        Self {
            coeffs: DenseMatrix::zeros(n, 0),
            eigenvalues: Vec::new(),
            m: 0,
            n,
        }
    }
}

/// Builds the basis from the joint and sensitive Gram matrices.
pub fn build_fair_basis(k_xs: &DenseMatrix, k_s: &DenseMatrix, rtol: f64) -> Result<FairBasis> {
    if k_xs.shape() != k_s.shape() || !k_xs.is_square() {
        return Err(FairError::InvalidDimension(format!(
            "K_XS is {:?} but K_S is {:?}",
            k_xs.shape(),
            k_s.shape()
        )));
    }
    let factor = SensitiveFactor::from_gram(k_s, rtol)?;
    build_fair_basis_from_factor(k_xs, &factor, rtol)
}

pub fn build_fair_basis_from_factor(
    k_xs: &DenseMatrix,
    factor: &SensitiveFactor,
    rtol: f64,
) -> Result<FairBasis> {
    let n = k_xs.nrows();
    if factor.range.nrows() != n || !k_xs.is_square() {
        return Err(FairError::InvalidDimension(format!(
            "sensitive factor has {} rows, K_XS is {:?}",
            factor.range.nrows(),
            k_xs.shape()
        )));
    }
    if factor.rank == 0 {
        return Ok(FairBasis::empty(n));
    }
    let k = k_xs.as_matrix();

    // candidate coefficients C = H V, exactly centered column-wise
    let mut cand = factor.range.as_matrix().clone();
    for mut col in cand.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }

    // orthonormalize Φ C in the RKHS: eigendecompose Cᵀ K C
    let kc = k * &cand;
    let gram_c = DenseMatrix::from_matrix(symmetrize(cand.transpose() * &kc))?;
    let eig = sym_eig(&gram_c)?;
    let keep = numerical_rank(&eig.values, rtol);
    if keep == 0 {
        return Ok(FairBasis::empty(n));
    }
    let scale = DMatrix::from_fn(cand.ncols(), keep, |r, c| {
        eig.vectors[(r, c)] / eig.values[c].sqrt()
    });
    let ortho = &cand * scale;

    // rotate onto the eigenfunctions of Σ_(XS)S Σ_S(XS):
    // <θ_a, Σ Σ* θ_b> = (1/n²) a_aᵀ K K̄_S K a_b
    let k_s_bar = factor_gram(factor);
    let ka = k * &ortho;
    let nf = n as f64;
    let op = symmetrize(ka.transpose() * k_s_bar * &ka / (nf * nf));
    let rot = sym_eig(&DenseMatrix::from_matrix(op)?)?;
    let coeffs = ortho * rot.vectors.as_matrix();

    Ok(FairBasis {
        coeffs: DenseMatrix::from_matrix(coeffs)?,
        eigenvalues: rot.values,
        m: keep,
        n,
    })
}

/// Rebuilds `H K_S H` restricted to its retained spectrum.
fn factor_gram(factor: &SensitiveFactor) -> DMatrix<f64> {
    let v = factor.range.as_matrix();
    let lam = DVector::from_iterator(factor.rank, factor.eigenvalues.iter().take(factor.rank).copied());
    let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |r, c| v[(r, c)] * lam[c]);
    scaled * v.transpose()
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Coefficient-space projector onto the fair subspace.
#[derive(Debug, Clone)]
pub struct ProjectionMatrix {
    pub p: DenseMatrix,
    /// Number of basis directions removed (the basis size `m`).
    pub removed: usize,
}

impl ProjectionMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            p: DenseMatrix::identity(n),
            removed: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }
}

/// `P = I - Σ_j a_j a_jᵀ K`.
pub fn projection_matrix(basis: &FairBasis, k_xs: &DenseMatrix) -> Result<ProjectionMatrix> {
    let n = basis.n;
    if k_xs.shape() != (n, n) || basis.coeffs.shape() != (n, basis.m) {
        return Err(FairError::InvalidDimension(format!(
            "basis over {n} points, K_XS is {:?}",
            k_xs.shape()
        )));
    }
    if basis.m >= n {
        return Err(FairError::InvalidDimension(format!(
            "basis size {} must be below n = {n}",
            basis.m
        )));
    }
    if basis.m == 0 {
        return Ok(ProjectionMatrix::identity(n));
    }
    let a = basis.coeffs.as_matrix();
    let p = DMatrix::identity(n, n) - a * (a.transpose() * k_xs.as_matrix());
    Ok(ProjectionMatrix {
        p: DenseMatrix::from_matrix(p)?,
        removed: basis.m,
    })
}

/// Group means of `values` for each code in `0..k`; `None` for empty groups.
pub fn group_means(values: &[f64], group_codes: &[usize], k: usize) -> Vec<Option<f64>> {
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&v, &g) in values.iter().zip(group_codes) {
        sums[g] += v;
        counts[g] += 1;
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| (c > 0).then(|| s / c as f64))
        .collect()
}

/// Largest `|group mean - global mean|` of the fitted values `K P c`.
pub fn fair_group_mean_residual(
    k_xs: &DenseMatrix,
    p: &ProjectionMatrix,
    c: &[f64],
    group_codes: &[usize],
    k: usize,
) -> Result<f64> {
    let n = p.n();
    if k_xs.shape() != (n, n) || c.len() != n || group_codes.len() != n {
        return Err(FairError::InvalidDimension(format!(
            "K_XS {:?}, P {n}x{n}, c {}, codes {}",
            k_xs.shape(),
            c.len(),
            group_codes.len()
        )));
    }
    let cv = DVector::from_column_slice(c);
    let fitted = k_xs.as_matrix() * (p.p.as_matrix() * cv);
    Ok(max_group_deviation(fitted.as_slice(), group_codes, k))
}

pub(crate) fn max_group_deviation(values: &[f64], group_codes: &[usize], k: usize) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let global = values.iter().sum::<f64>() / values.len() as f64;
    group_means(values, group_codes, k)
        .into_iter()
        .flatten()
        .map(|m| (m - global).abs())
        .fold(0.0, f64::max)
}
