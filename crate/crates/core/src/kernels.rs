//! Kernel functions, Gram matrices and the joint kernel over `(x, s)`.
//!
//! Each kernel kind reads one part of a [`SampleRow`]: `Linear` and `Rbf`
//! act on the non-sensitive features `x`, `Polynomial` acts on the scalar
//! sensitive value `s_value`, and `DeltaGroup` compares group codes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::numerics::DenseMatrix;

/// One observation as seen by the kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub x: Vec<f64>,
    pub s_code: usize,
    pub s_value: f64,
}

/// How the sensitive part enters the joint kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositionMode {
    /// `k_xs = k_x + k_s`
    Sum,
    /// `k_xs = k_x`; the model never sees `s`.
    IgnoreS,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    Rbf {
        gamma: f64,
    },
    Polynomial {
        degree: u32,
        offset: f64,
    },
    DeltaGroup,
    ComposedXs {
        x_part: Box<KernelSpec>,
        s_part: Box<KernelSpec>,
        mode: CompositionMode,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitiveFlavor {
    Delta,
    Polynomial,
}

impl KernelSpec {
    pub fn composed(x_part: KernelSpec, s_part: KernelSpec, mode: CompositionMode) -> Self {
        KernelSpec::ComposedXs {
            x_part: Box::new(x_part),
            s_part: Box::new(s_part),
            mode,
        }
    }

    /// Checks parameter ranges and that compositions are not nested.
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Linear | KernelSpec::DeltaGroup => Ok(()),
            KernelSpec::Rbf { gamma } => {
                if *gamma > 0.0 && gamma.is_finite() {
                    Ok(())
                } else {
                    Err(FairError::Range(format!("rbf gamma must be > 0, got {gamma}")))
                }
            }
            KernelSpec::Polynomial { degree, offset } => {
                if *degree < 1 {
                    Err(FairError::Range("polynomial degree must be >= 1".into()))
                } else if !offset.is_finite() {
                    Err(FairError::Range("polynomial offset must be finite".into()))
                } else {
                    Ok(())
                }
            }
            KernelSpec::ComposedXs { x_part, s_part, .. } => {
                for part in [x_part, s_part] {
                    if matches!(**part, KernelSpec::ComposedXs { .. }) {
                        return Err(FairError::Range(
                            "composed kernels cannot be nested".into(),
                        ));
                    }
                    part.validate()?;
                }
                Ok(())
            }
        }
    }

    fn reads_x(&self) -> bool {
        match self {
            KernelSpec::Linear | KernelSpec::Rbf { .. } => true,
            KernelSpec::Polynomial { .. } | KernelSpec::DeltaGroup => false,
            KernelSpec::ComposedXs { x_part, s_part, mode } => {
                x_part.reads_x() || (*mode == CompositionMode::Sum && s_part.reads_x())
            }
        }
    }
}

fn eval_unchecked(spec: &KernelSpec, a: &SampleRow, b: &SampleRow) -> f64 {
    match spec {
        KernelSpec::Linear => a.x.iter().zip(&b.x).map(|(p, q)| p * q).sum(),
        KernelSpec::Rbf { gamma } => {
            let d2: f64 = a.x.iter().zip(&b.x).map(|(p, q)| (p - q) * (p - q)).sum();
            (-gamma * d2).exp()
        }
        KernelSpec::Polynomial { degree, offset } => {
            (offset + a.s_value * b.s_value).powi(*degree as i32)
        }
        KernelSpec::DeltaGroup => f64::from(u8::from(a.s_code == b.s_code)),
        KernelSpec::ComposedXs {
            x_part,
            s_part,
            mode,
        } => match mode {
            CompositionMode::Sum => eval_unchecked(x_part, a, b) + eval_unchecked(s_part, a, b),
            CompositionMode::IgnoreS => eval_unchecked(x_part, a, b),
        },
    }
}

fn check_pair(spec: &KernelSpec, a: &SampleRow, b: &SampleRow) -> Result<()> {
    if spec.reads_x() && a.x.len() != b.x.len() {
        return Err(FairError::InvalidDimension(format!(
            "feature lengths differ: {} vs {}",
            a.x.len(),
            b.x.len()
        )));
    }
    Ok(())
}

fn check_rows(spec: &KernelSpec, rows: &[SampleRow], dim: usize) -> Result<()> {
    if spec.reads_x() {
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.x.len() != dim) {
            return Err(FairError::InvalidDimension(format!(
                "row {i} has {} features, expected {dim}",
                r.x.len()
            )));
        }
    }
    Ok(())
}

/// Evaluates `spec` on one pair of rows.
pub fn eval_kernel(spec: &KernelSpec, a: &SampleRow, b: &SampleRow) -> Result<f64> {
    spec.validate()?;
    check_pair(spec, a, b)?;
    Ok(eval_unchecked(spec, a, b))
}

/// Gram matrix over `rows`; exactly symmetric.
pub fn gram(spec: &KernelSpec, rows: &[SampleRow]) -> Result<DenseMatrix> {
    spec.validate()?;
    let first = rows
        .first()
        .ok_or_else(|| FairError::InvalidDimension("gram of an empty sample".into()))?;
    check_rows(spec, rows, first.x.len())?;
    let n = rows.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = eval_unchecked(spec, &rows[i], &rows[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    DenseMatrix::from_matrix(k)
}

/// `|test| x |train|` matrix of kernel values between test and train rows.
pub fn cross_gram(spec: &KernelSpec, train: &[SampleRow], test: &[SampleRow]) -> Result<DenseMatrix> {
    spec.validate()?;
    let first = train
        .first()
        .ok_or_else(|| FairError::InvalidDimension("cross_gram with empty train rows".into()))?;
    if test.is_empty() {
        return Err(FairError::InvalidDimension("cross_gram with empty test rows".into()));
    }
    check_rows(spec, train, first.x.len())?;
    check_rows(spec, test, first.x.len())?;
    let k = DMatrix::from_fn(test.len(), train.len(), |i, j| {
        eval_unchecked(spec, &test[i], &train[j])
    });
    DenseMatrix::from_matrix(k)
}

/// The sensitive kernel used when none is configured explicitly.
///
/// The polynomial flavor uses degree `k - 1` with offset 1, clamped to degree
/// 1 when there is a single group.
pub fn default_sensitive_kernel(k: usize, flavor: SensitiveFlavor) -> Result<KernelSpec> {
    if k == 0 {
        return Err(FairError::Range("group count must be >= 1".into()));
    }
    Ok(match flavor {
        SensitiveFlavor::Delta => KernelSpec::DeltaGroup,
        SensitiveFlavor::Polynomial => KernelSpec::Polynomial {
            degree: (k as u32 - 1).max(1),
            offset: 1.0,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{center_gram, numerical_rank, sym_eig, DEFAULT_RTOL};

    fn row(x: &[f64], s_code: usize) -> SampleRow {
        SampleRow {
            x: x.to_vec(),
            s_code,
            s_value: s_code as f64,
        }
    }

    #[test]
    fn eval_examples() {
        let a = row(&[1.0, 2.0], 2);
        let b = row(&[3.0, 4.0], 0);
        assert_eq!(eval_kernel(&KernelSpec::Linear, &a, &b).unwrap(), 11.0);
        assert_eq!(eval_kernel(&KernelSpec::Rbf { gamma: 0.1 }, &a, &a).unwrap(), 1.0);
        assert_eq!(eval_kernel(&KernelSpec::DeltaGroup, &a, &a).unwrap(), 1.0);
        assert_eq!(eval_kernel(&KernelSpec::DeltaGroup, &a, &b).unwrap(), 0.0);
        let poly = KernelSpec::Polynomial { degree: 2, offset: 1.0 };
        assert_eq!(eval_kernel(&poly, &a, &a).unwrap(), 25.0);
    }

    #[test]
    fn eval_rejects_bad_inputs() {
        let a = row(&[1.0, 2.0], 0);
        let b = row(&[1.0], 0);
        assert!(eval_kernel(&KernelSpec::Linear, &a, &b).is_err());
        // sensitive kernels do not look at x
        assert!(eval_kernel(&KernelSpec::DeltaGroup, &a, &b).is_ok());
        assert!(eval_kernel(&KernelSpec::Rbf { gamma: 0.0 }, &a, &a).is_err());
        let nested = KernelSpec::composed(
            KernelSpec::composed(KernelSpec::Linear, KernelSpec::DeltaGroup, CompositionMode::Sum),
            KernelSpec::DeltaGroup,
            CompositionMode::Sum,
        );
        assert!(eval_kernel(&nested, &a, &a).is_err());
    }

    #[test]
    fn gram_examples() {
        let rows = vec![row(&[1.0], 0), row(&[2.0], 0), row(&[3.0], 1)];
        let k = gram(&KernelSpec::Linear, &rows).unwrap();
        assert_eq!(k.to_row_major(), vec![1., 2., 3., 2., 4., 6., 3., 6., 9.]);
        assert!(gram(&KernelSpec::Linear, &[]).is_err());

        let test = vec![row(&[1.0], 0)];
        let c = cross_gram(&KernelSpec::Linear, &rows, &test).unwrap();
        assert_eq!(c.to_row_major(), vec![1., 2., 3.]);
        let same = cross_gram(&KernelSpec::Rbf { gamma: 0.3 }, &rows, &rows).unwrap();
        assert_eq!(same, gram(&KernelSpec::Rbf { gamma: 0.3 }, &rows).unwrap());
    }

    #[test]
    fn composed_sum_is_entrywise_sum() {
        let rows: Vec<SampleRow> = (0..6)
            .map(|i| row(&[i as f64 * 0.3, 1.0 - i as f64], i % 3))
            .collect();
        let x = KernelSpec::Rbf { gamma: 0.5 };
        let s = KernelSpec::DeltaGroup;
        let joint = KernelSpec::composed(x.clone(), s.clone(), CompositionMode::Sum);
        let kj = gram(&joint, &rows).unwrap();
        let kx = gram(&x, &rows).unwrap();
        let ks = gram(&s, &rows).unwrap();
        assert_eq!(kj.as_matrix(), &(kx.as_matrix() + ks.as_matrix()));
        let ignore = KernelSpec::composed(x, s, CompositionMode::IgnoreS);
        assert_eq!(gram(&ignore, &rows).unwrap(), kx);
    }

    #[test]
    fn default_sensitive_kernels() {
        assert_eq!(
            default_sensitive_kernel(2, SensitiveFlavor::Polynomial).unwrap(),
            KernelSpec::Polynomial { degree: 1, offset: 1.0 }
        );
        assert_eq!(
            default_sensitive_kernel(1, SensitiveFlavor::Polynomial).unwrap(),
            KernelSpec::Polynomial { degree: 1, offset: 1.0 }
        );
        assert!(default_sensitive_kernel(0, SensitiveFlavor::Delta).is_err());

        let spec = default_sensitive_kernel(4, SensitiveFlavor::Delta).unwrap();
        let rows: Vec<SampleRow> = (0..12).map(|i| row(&[], i % 4)).collect();
        let k = center_gram(&gram(&spec, &rows).unwrap()).unwrap();
        let e = sym_eig(&k).unwrap();
        assert_eq!(numerical_rank(&e.values, DEFAULT_RTOL), 3);
    }
}
