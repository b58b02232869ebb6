//! Reference computations shared by the integration tests. Everything here is
//! written directly against nalgebra so it does not reuse the library's own
//! factorizations.

#![allow(dead_code)]

use mpfair_core::prelude::*;
use nalgebra::{DMatrix, DVector};

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Largest `|group mean - global mean|`, computed from raw values.
pub fn group_mean_spread(values: &[f64], codes: &[usize], k: usize) -> f64 {
    let g = mean(values);
    (0..k)
        .filter_map(|j| {
            let members: Vec<f64> = values
                .iter()
                .zip(codes)
                .filter(|(_, &c)| c == j)
                .map(|(v, _)| *v)
                .collect();
            (!members.is_empty()).then(|| (mean(&members) - g).abs())
        })
        .fold(0.0, f64::max)
}

/// Equality-constrained least squares on explicit features: minimizes
/// `||y - Z b||²` subject to equal group means of `Z b`, by solving the KKT
/// system. Returns the fitted values `Z b`.
pub fn kkt_fair_fit(z: &DMatrix<f64>, y: &[f64], codes: &[usize], k: usize) -> Vec<f64> {
    let (n, p) = z.shape();
    let overall = z.row_mean();
    // one constraint per group; the last is implied by the others
    let mut c = DMatrix::zeros(k - 1, p);
    for j in 0..k - 1 {
        let members: Vec<usize> = (0..n).filter(|&i| codes[i] == j).collect();
        for col in 0..p {
            let gm = members.iter().map(|&i| z[(i, col)]).sum::<f64>() / members.len() as f64;
            c[(j, col)] = gm - overall[col];
        }
    }
    let size = p + k - 1;
    let mut kkt = DMatrix::zeros(size, size);
    kkt.view_mut((0, 0), (p, p)).copy_from(&(z.transpose() * z * 2.0));
    kkt.view_mut((0, p), (p, k - 1)).copy_from(&c.transpose());
    kkt.view_mut((p, 0), (k - 1, p)).copy_from(&c);
    let mut rhs = DVector::zeros(size);
    rhs.rows_mut(0, p).copy_from(&(z.transpose() * DVector::from_column_slice(y) * 2.0));
    let sol = kkt.lu().solve(&rhs).expect("KKT system is singular");
    (z * sol.rows(0, p)).as_slice().to_vec()
}

/// Coefficients spanning the unfair directions, from a dense nonsymmetric
/// eigensolve of `(1/n²) K̄_S K̄_XS`: for every eigenvalue above `tol · max`
/// the eigenvectors are read off the null space of `M - ψ I`, then mapped
/// through the centering matrix.
pub fn eigen_span_coeffs(k_xs: &DMatrix<f64>, k_s: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = k_xs.nrows();
    let h = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let ks_c = &h * k_s * &h;
    let kxs_c = &h * k_xs * &h;
    let m = &ks_c * &kxs_c / (n * n) as f64;
    let eig = m.clone().complex_eigenvalues();
    let top = eig.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    let mut psi: Vec<f64> = eig
        .iter()
        .filter(|z| z.norm() > tol * top)
        .map(|z| z.re)
        .collect();
    psi.sort_by(|a, b| b.total_cmp(a));

    let mut columns: Vec<DVector<f64>> = Vec::new();
    let mut i = 0;
    while i < psi.len() {
        // group numerically repeated eigenvalues
        let mut j = i + 1;
        while j < psi.len() && (psi[j] - psi[i]).abs() <= 1e-8 * top {
            j += 1;
        }
        let multiplicity = j - i;
        let shifted = &m - DMatrix::identity(n, n) * psi[i];
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.unwrap();
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        for &r in order.iter().take(multiplicity) {
            columns.push(v_t.row(r).transpose());
        }
        i = j;
    }
    let a_bar = DMatrix::from_columns(&columns);
    h * a_bar
}

/// `I - A (Aᵀ K A)⁻¹ Aᵀ K` for an arbitrary (not necessarily orthonormal)
/// coefficient matrix `A`.
pub fn oblique_projector(a: &DMatrix<f64>, k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    if a.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    let gram = a.transpose() * k * a;
    let inv = gram.try_inverse().expect("coefficient Gram is singular");
    DMatrix::identity(n, n) - a * inv * a.transpose() * k
}

/// Weights minimizing `||y - K w||² + λ wᵀ K w + ζ wᵀ K A Aᵀ K w`, from the
/// normal equations solved by SVD.
pub fn penalized_fit(k: &DMatrix<f64>, y: &[f64], lambda: f64, zeta: f64, a: &DMatrix<f64>) -> Vec<f64> {
    let ka = k * a;
    let system = k * k + k * lambda + &ka * ka.transpose() * zeta;
    let rhs = k * DVector::from_column_slice(y);
    system
        .svd(true, true)
        .solve(&rhs, 1e-13 * (k.norm().powi(2) + zeta * ka.norm_squared()))
        .unwrap()
        .as_slice()
        .to_vec()
}

/// Rows with `x ~ U(-1, 1)^d` and codes cycling through `0..k`.
pub fn random_rows(rng: &mut impl rand::Rng, n: usize, d: usize, k: usize) -> Vec<SampleRow> {
    (0..n)
        .map(|i| {
            let s_code = if i < k { i } else { rng.random_range(0..k) };
            SampleRow {
                x: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
                s_code,
                s_value: s_code as f64,
            }
        })
        .collect()
}

pub fn codes(rows: &[SampleRow]) -> Vec<usize> {
    rows.iter().map(|r| r.s_code).collect()
}

pub fn centered(mut y: Vec<f64>) -> Vec<f64> {
    let m = mean(&y);
    y.iter_mut().for_each(|v| *v -= m);
    y
}

/// Synthetic linear benchmark: n = 400, d = 5, one binary attribute with raw
/// values ±0.1, noise sd √0.1, split 80/20 and centered on the train mean.
pub struct Benchmark {
    pub train: DataSet,
    pub test: DataSet,
    pub intercept: f64,
    pub joint: KernelSpec,
    pub sensitive: KernelSpec,
    pub k: DenseMatrix,
    pub k_s: DenseMatrix,
    pub basis: FairBasis,
    pub p: ProjectionMatrix,
}

impl Benchmark {
    pub fn new(seed: u64) -> Self {
        let cfg = SyntheticConfig {
            n: 400,
            d: 5,
            e: 1,
            noise_sd: 0.1f64.sqrt(),
            link: Link::Linear,
        };
        let ds = gen_synthetic(&cfg, seed)
            .unwrap()
            .with_encoding(SensitiveEncoding::Raw)
            .unwrap();
        let (train, test) = split(&ds, 0.8, seed).unwrap();
        let (train, test, intercept) = center_targets(&train, &test).unwrap();
        // linear regression on [x, s] with a degree-1 polynomial kernel on s
        let joint = KernelSpec::composed(
            KernelSpec::Linear,
            KernelSpec::Polynomial { degree: 1, offset: 0.0 },
            CompositionMode::Sum,
        );
        let sensitive = default_sensitive_kernel(2, SensitiveFlavor::Polynomial).unwrap();
        let k = gram(&joint, &train.rows).unwrap();
        let k_s = gram(&sensitive, &train.rows).unwrap();
        let basis = build_fair_basis(&k, &k_s, DEFAULT_RTOL).unwrap();
        let p = projection_matrix(&basis, &k).unwrap();
        Self { train, test, intercept, joint, sensitive, k, k_s, basis, p }
    }

    pub fn codes(&self) -> Vec<usize> {
        self.train.group_codes()
    }

    pub fn model(&self, weights: Vec<f64>, variant: ModelVariant) -> FittedModel {
        FittedModel::new(self.train.rows.clone(), weights, self.joint.clone(), 0.0, self.intercept, variant)
            .unwrap()
    }
}
