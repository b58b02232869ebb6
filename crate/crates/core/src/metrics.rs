//! Evaluation quantities: MSE, SMD/MPD, empirical 1-Wasserstein DPD and the
//! covariance-embedding norm.

use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::fair_subspace::group_means;
use crate::numerics::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Metrics of one model on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub split: Split,
    pub mse: f64,
    pub smd: f64,
    /// Same quantity as `smd`; kept under both names.
    pub mpd: f64,
    pub dpd: Option<f64>,
    pub cov_norm: Option<f64>,
    /// `None` for groups with no samples in this split.
    pub per_group_means: Vec<Option<f64>>,
    pub missing_groups: Vec<usize>,
}

impl MetricReport {
    /// Computes every metric. Groups absent from the split are skipped by the
    /// group-based metrics and listed in `missing_groups`.
    pub fn compute(
        split: Split,
        pred: &[f64],
        y: &[f64],
        group_codes: &[usize],
        k: usize,
        k_s: Option<&DenseMatrix>,
    ) -> Result<Self> {
        let mse = mse(pred, y)?;
        check_codes(pred, group_codes, k)?;
        let per_group_means = group_means(pred, group_codes, k);
        let missing_groups: Vec<usize> = per_group_means
            .iter()
            .enumerate()
            .filter_map(|(g, m)| m.is_none().then_some(g))
            .collect();
        let global = mean(pred);
        let smd: f64 = per_group_means
            .iter()
            .flatten()
            .map(|m| (m - global).abs())
            .sum();
        let dpd = dpd_present(pred, group_codes, k)?;
        let cov_norm = k_s.map(|ks| cov_norm(pred, ks)).transpose()?;
        Ok(Self {
            split,
            mse,
            smd,
            mpd: smd,
            dpd: Some(dpd),
            cov_norm,
            per_group_means,
            missing_groups,
        })
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn check_codes(pred: &[f64], group_codes: &[usize], k: usize) -> Result<()> {
    if pred.len() != group_codes.len() {
        return Err(FairError::InvalidDimension(format!(
            "{} predictions but {} group codes",
            pred.len(),
            group_codes.len()
        )));
    }
    if pred.is_empty() {
        return Err(FairError::InvalidDimension("empty prediction vector".into()));
    }
    if let Some(&g) = group_codes.iter().find(|&&g| g >= k) {
        return Err(FairError::Range(format!("group code {g} >= k = {k}")));
    }
    Ok(())
}

fn strict_means(pred: &[f64], group_codes: &[usize], k: usize) -> Result<Vec<f64>> {
    check_codes(pred, group_codes, k)?;
    group_means(pred, group_codes, k)
        .into_iter()
        .enumerate()
        .map(|(group, m)| m.ok_or(FairError::MissingGroup { group, k }))
        .collect()
}

/// Mean squared error.
pub fn mse(pred: &[f64], y: &[f64]) -> Result<f64> {
    if pred.len() != y.len() {
        return Err(FairError::InvalidDimension(format!(
            "{} predictions for {} targets",
            pred.len(),
            y.len()
        )));
    }
    if pred.is_empty() {
        return Err(FairError::InvalidDimension("mse of empty vectors".into()));
    }
    let sum: f64 = pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

/// Sum over groups of `|group mean - global mean|`. Every group in `0..k`
/// must be present.
pub fn smd(pred: &[f64], group_codes: &[usize], k: usize) -> Result<f64> {
    let means = strict_means(pred, group_codes, k)?;
    let global = mean(pred);
    Ok(means.iter().map(|m| (m - global).abs()).sum())
}

/// Empirical mean-parity disparity; identical to [`smd`].
pub fn mpd(pred: &[f64], group_codes: &[usize], k: usize) -> Result<f64> {
    smd(pred, group_codes, k)
}

/// 1-Wasserstein distance between two empirical distributions, integrating
/// `|F_a - F_b|` over the merged support.
pub fn w1_empirical(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(FairError::InvalidDimension("w1 of an empty sample".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(FairError::NonFinite("w1 sample".into()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);

    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = xs[0].min(ys[0]);
    let mut total = 0.0;
    while i < xs.len() || j < ys.len() {
        let next = match (xs.get(i), ys.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        let gap = (i as f64 / na - j as f64 / nb).abs();
        total += gap * (next - prev);
        while i < xs.len() && xs[i] == next {
            i += 1;
        }
        while j < ys.len() && ys[j] == next {
            j += 1;
        }
        prev = next;
    }
    Ok(total)
}

fn split_by_group(pred: &[f64], group_codes: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut groups = vec![Vec::new(); k];
    for (&p, &g) in pred.iter().zip(group_codes) {
        groups[g].push(p);
    }
    groups
}

/// Sum over groups of `W1(pred | group, pred)`. Every group must be present.
pub fn dpd(pred: &[f64], group_codes: &[usize], k: usize) -> Result<f64> {
    strict_means(pred, group_codes, k)?;
    dpd_present(pred, group_codes, k)
}

fn dpd_present(pred: &[f64], group_codes: &[usize], k: usize) -> Result<f64> {
    check_codes(pred, group_codes, k)?;
    split_by_group(pred, group_codes, k)
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| w1_empirical(g, pred))
        .sum()
}

/// `(1/n) sqrt(p̄ᵀ K_S p̄)` with `p̄` the centered predictions: the RKHS norm of
/// the empirical covariance between the sensitive embedding and `pred`.
pub fn cov_norm(pred: &[f64], k_s: &DenseMatrix) -> Result<f64> {
    let n = pred.len();
    if k_s.shape() != (n, n) {
        return Err(FairError::InvalidDimension(format!(
            "{n} predictions but K_S is {:?}",
            k_s.shape()
        )));
    }
    if n == 0 {
        return Err(FairError::InvalidDimension("cov_norm of empty vector".into()));
    }
    let m = mean(pred);
    let centered = nalgebra::DVector::from_iterator(n, pred.iter().map(|p| p - m));
    let quad = centered.dot(&(k_s.as_matrix() * &centered));
    let scale = centered.norm_squared() * k_s.max_abs() * n as f64;
    if quad < -1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(FairError::Numeric(format!(
            "negative covariance quadratic form {quad:e}; K_S is not PSD"
        )));
    }
    Ok(quad.max(0.0).sqrt() / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{gram, KernelSpec, SampleRow};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert!(mse(&[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mse_matches_two_pass_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p: Vec<f64> = (0..500).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..500).map(|_| rng.random_range(-3.0..3.0)).collect();
        let sq: Vec<f64> = p.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).collect();
        let mut acc = 0.0;
        let mut comp = 0.0;
        for v in &sq {
            // Kahan summation
            let t = acc + (v - comp);
            comp = (t - acc) - (v - comp);
            acc = t;
        }
        let oracle = acc / 500.0;
        let got = mse(&p, &y).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn smd_examples() {
        assert_eq!(smd(&[2.0; 4], &[0, 1, 0, 1], 2).unwrap(), 0.0);
        assert_eq!(smd(&[1.0, 1.0, 3.0, 3.0], &[0, 0, 1, 1], 2).unwrap(), 2.0);
        assert!(matches!(
            smd(&[1.0, 2.0], &[0, 0], 2),
            Err(FairError::MissingGroup { group: 1, .. })
        ));
    }

    #[test]
    fn w1_examples() {
        let a = [0.3, -1.0, 2.0];
        assert_eq!(w1_empirical(&a, &a).unwrap(), 0.0);
        assert_eq!(w1_empirical(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(w1_empirical(&[0.0, 1.0], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!(w1_empirical(&[], &[1.0]).is_err());
        // equal sizes reduce to mean |sorted difference|
        let x = [3.0, 1.0, 2.0];
        let y = [0.0, 5.0, 1.0];
        assert!((w1_empirical(&x, &y).unwrap() - (1.0 + 1.0 + 2.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn dpd_examples() {
        assert_eq!(dpd(&[1.5; 6], &[0, 1, 2, 0, 1, 2], 3).unwrap(), 0.0);
        assert_eq!(dpd(&[1.0, 2.0, 4.0], &[0, 0, 0], 1).unwrap(), 0.0);
    }

    #[test]
    fn cov_norm_examples() {
        let rows: Vec<SampleRow> = (0..6)
            .map(|i| SampleRow { x: vec![], s_code: i % 2, s_value: (i % 2) as f64 })
            .collect();
        let ks = gram(&KernelSpec::DeltaGroup, &rows).unwrap();
        assert_eq!(cov_norm(&[3.0; 6], &ks).unwrap(), 0.0);
        let single = gram(&KernelSpec::DeltaGroup, &rows.iter().cloned().map(|mut r| { r.s_code = 0; r }).collect::<Vec<_>>()).unwrap();
        assert!(cov_norm(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &single).unwrap() < 1e-12);
        // group means equal => zero covariance with indicator features
        let pred = [1.0, 2.0, 3.0, 4.0, 2.0, 0.0];
        assert_eq!(smd(&pred, &[0, 1, 0, 1, 0, 1], 2).unwrap(), 0.0);
        assert!(cov_norm(&pred, &ks).unwrap() < 1e-12);
    }

    #[test]
    fn report_skips_absent_groups() {
        let r = MetricReport::compute(Split::Test, &[1.0, 3.0], &[1.0, 3.0], &[0, 2], 3, None).unwrap();
        assert_eq!(r.missing_groups, vec![1]);
        assert_eq!(r.smd, 2.0);
        assert_eq!(r.mpd, r.smd);
        assert!(r.dpd.unwrap() >= r.mpd);
    }
}
