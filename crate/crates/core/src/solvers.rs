//! Model fitting: unconstrained kernel least squares, the closed-form fair
//! solver, the fairness/accuracy interpolant, the penalty baseline, the
//! constant baseline and first-order fitting for general losses.
//!
//! All solvers work on centered targets and return a weight vector `w` over
//! the training points; fitted values are `K w` and predictions on new rows are
//! `K(test, train) w + intercept`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::fair_subspace::{FairBasis, ProjectionMatrix};
use crate::kernels::{cross_gram, KernelSpec, SampleRow};
use crate::metrics::mse;
use crate::numerics::{pinv_sym, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    Squared,
    SmoothL1 { beta: f64 },
}

impl LossSpec {
    fn validate(&self) -> Result<()> {
        match *self {
            LossSpec::Squared => Ok(()),
            LossSpec::SmoothL1 { beta } if beta > 0.0 && beta.is_finite() => Ok(()),
            LossSpec::SmoothL1 { beta } => {
                Err(FairError::Range(format!("smooth-l1 beta must be > 0, got {beta}")))
            }
        }
    }

    /// Loss value and derivative with respect to the prediction.
    fn value_and_slope(&self, target: f64, pred: f64) -> (f64, f64) {
        let r = target - pred;
        match *self {
            LossSpec::Squared => (r * r, -2.0 * r),
            LossSpec::SmoothL1 { beta } => {
                if r.abs() < beta {
                    (0.5 * r * r / beta, -r / beta)
                } else {
                    (r.abs() - 0.5 * beta, -r.signum())
                }
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            LossSpec::Squared => "squared".into(),
            LossSpec::SmoothL1 { beta } => format!("smooth_l1(beta={beta})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    FixedStepGradient {
        step: f64,
    },
    AdaptiveMoment {
        step: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl OptimizerKind {
    pub fn adaptive_default() -> Self {
        OptimizerKind::AdaptiveMoment {
            step: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub max_iters: usize,
    /// Stop once `||grad||_inf <= grad_tol * ||grad_0||_inf`; with `0` only a
    /// vanishing gradient stops early.
    pub grad_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::adaptive_default(),
            max_iters: 50_000,
            grad_tol: 1e-9,
        }
    }
}

impl OptimizerConfig {
    fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            OptimizerKind::FixedStepGradient { step } => step > 0.0,
            OptimizerKind::AdaptiveMoment {
                step,
                beta1,
                beta2,
                epsilon,
            } => {
                step > 0.0
                    && (0.0..1.0).contains(&beta1)
                    && (0.0..1.0).contains(&beta2)
                    && epsilon >= 0.0
            }
        };
        if !ok {
            return Err(FairError::Range(format!("invalid optimizer settings {:?}", self.kind)));
        }
        if self.grad_tol.is_nan() || self.grad_tol < 0.0 {
            return Err(FairError::Range("grad_tol must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelVariant {
    Constant,
    Unconstrained,
    Fair,
    Tradeoff { alpha: f64 },
    Fpr { zeta: f64 },
    GradientFair { loss: LossSpec },
}

/// A fitted kernel regression function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub train_rows: Vec<SampleRow>,
    pub weights: Vec<f64>,
    pub kernel: KernelSpec,
    pub lambda: f64,
    /// Train-target mean, added back at prediction time.
    pub intercept: f64,
    pub variant: ModelVariant,
}

impl FittedModel {
    pub fn new(
        train_rows: Vec<SampleRow>,
        weights: Vec<f64>,
        kernel: KernelSpec,
        lambda: f64,
        intercept: f64,
        variant: ModelVariant,
    ) -> Result<Self> {
        if weights.len() != train_rows.len() {
            return Err(FairError::InvalidDimension(format!(
                "{} weights for {} training rows",
                weights.len(),
                train_rows.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) || !intercept.is_finite() {
            return Err(FairError::NonFinite("model weights".into()));
        }
        Ok(Self {
            train_rows,
            weights,
            kernel,
            lambda,
            intercept,
            variant,
        })
    }
}

fn check_square(k: &DenseMatrix, n: usize, what: &str) -> Result<()> {
    if k.shape() != (n, n) {
        return Err(FairError::InvalidDimension(format!(
            "{what}: expected {n}x{n}, got {:?}",
            k.shape()
        )));
    }
    Ok(())
}

fn check_targets(y: &[f64]) -> Result<()> {
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(FairError::NonFinite(format!("target {i} is {}", y[i])));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(FairError::Range(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(())
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `(K K + λ K)† K y`.
pub fn fit_unconstrained(k: &DenseMatrix, y: &[f64], lambda: f64, rtol: f64) -> Result<Vec<f64>> {
    check_square(k, y.len(), "fit_unconstrained K")?;
    check_targets(y)?;
    check_lambda(lambda)?;
    let km = k.as_matrix();
    let mut system = km * km;
    if lambda > 0.0 {
        system += km * lambda;
    }
    solve_normal(system, km, y, rtol)
}

fn solve_normal(system: DMatrix<f64>, km: &DMatrix<f64>, y: &[f64], rtol: f64) -> Result<Vec<f64>> {
    let system = DenseMatrix::from_matrix(symmetrize(system))?;
    let inv = pinv_sym(&system, rtol)?;
    let rhs = km.transpose() * DVector::from_column_slice(y);
    Ok((inv.as_matrix() * rhs).as_slice().to_vec())
}

/// `P (Pᵀ K K P + λ Pᵀ K P)† Pᵀ K y`. With an identity projector this is
/// exactly [`fit_unconstrained`].
pub fn fit_fair(
    k: &DenseMatrix,
    y: &[f64],
    lambda: f64,
    p: &ProjectionMatrix,
    rtol: f64,
) -> Result<Vec<f64>> {
    check_square(k, y.len(), "fit_fair K")?;
    check_square(&p.p, y.len(), "fit_fair P")?;
    if p.removed == 0 {
        return fit_unconstrained(k, y, lambda, rtol);
    }
    check_targets(y)?;
    check_lambda(lambda)?;
    let (km, pm) = (k.as_matrix(), p.p.as_matrix());
    let kp = km * pm;
    let mut system = kp.transpose() * &kp;
    if lambda > 0.0 {
        system += pm.transpose() * &kp * lambda;
    }
    let w_h = solve_normal(system, &kp, y, rtol)?;
    Ok((pm * DVector::from_vec(w_h)).as_slice().to_vec())
}

/// `(1 - α) w_fair + α w_star`.
pub fn fit_tradeoff(w_fair: &[f64], w_star: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(FairError::Range(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if w_fair.len() != w_star.len() {
        return Err(FairError::InvalidDimension(format!(
            "weight lengths differ: {} vs {}",
            w_fair.len(),
            w_star.len()
        )));
    }
    Ok(w_fair
        .iter()
        .zip(w_star)
        .map(|(f, s)| (1.0 - alpha) * f + alpha * s)
        .collect())
}

/// Penalty baseline: `(K K + λ K + ζ K A K)† K y` with `A = Σ a_j a_jᵀ`.
pub fn fit_fpr(
    k: &DenseMatrix,
    y: &[f64],
    lambda: f64,
    zeta: f64,
    basis: &FairBasis,
    rtol: f64,
) -> Result<Vec<f64>> {
    if !(zeta >= 0.0 && zeta.is_finite()) {
        return Err(FairError::Range(format!("zeta must be >= 0, got {zeta}")));
    }
    check_square(k, y.len(), "fit_fpr K")?;
    check_targets(y)?;
    check_lambda(lambda)?;
    if basis.n != y.len() {
        return Err(FairError::InvalidDimension(format!(
            "basis over {} points, {} targets",
            basis.n,
            y.len()
        )));
    }
    let km = k.as_matrix();
    let mut system = km * km;
    if lambda > 0.0 {
        system += km * lambda;
    }
    if zeta > 0.0 && basis.m > 0 {
        let ka = km * basis.coeffs.as_matrix();
        system += &ka * ka.transpose() * zeta;
    }
    solve_normal(system, km, y, rtol)
}

/// Outcome of first-order fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientFit {
    /// Final weights `P v`.
    pub weights: Vec<f64>,
    /// Mean loss before each update, plus the final loss.
    pub losses: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `(1/n) Σ ℓ(y_i, (K P v)_i)` from `v = 0` and returns `P v`.
pub fn fit_gradient(
    k: &DenseMatrix,
    p: &ProjectionMatrix,
    y: &[f64],
    loss: LossSpec,
    opt: &OptimizerConfig,
) -> Result<GradientFit> {
    fit_gradient_monitored(k, p, y, loss, opt, |_, _| {})
}

/// Same as [`fit_gradient`], calling `monitor(iteration, fitted_values)` on
/// every iterate (including the initial point).
pub fn fit_gradient_monitored(
    k: &DenseMatrix,
    p: &ProjectionMatrix,
    y: &[f64],
    loss: LossSpec,
    opt: &OptimizerConfig,
    mut monitor: impl FnMut(usize, &[f64]),
) -> Result<GradientFit> {
    let n = y.len();
    check_square(k, n, "fit_gradient K")?;
    check_square(&p.p, n, "fit_gradient P")?;
    check_targets(y)?;
    loss.validate()?;
    opt.validate()?;

    let kp = k.as_matrix() * p.p.as_matrix();
    let kp_t = kp.transpose();
    let nf = n as f64;
    let mut v = DVector::<f64>::zeros(n);
    let mut first = DVector::<f64>::zeros(n);
    let mut second = DVector::<f64>::zeros(n);
    let mut fitted = DVector::<f64>::zeros(n);
    let mut slope = DVector::<f64>::zeros(n);
    let mut grad = DVector::<f64>::zeros(n);
    let mut losses = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut stop_below = None;

    loop {
        fitted.gemv(1.0, &kp, &v, 0.0);
        monitor(iterations, fitted.as_slice());
        let mut total = 0.0;
        for i in 0..n {
            let (l, s) = loss.value_and_slope(y[i], fitted[i]);
            total += l;
            slope[i] = s / nf;
        }
        let current = total / nf;
        if !current.is_finite() {
            return Err(FairError::Divergence {
                iteration: iterations,
                loss: current,
            });
        }
        losses.push(current);
        if iterations == opt.max_iters {
            break;
        }
        grad.gemv(1.0, &kp_t, &slope, 0.0);
        let threshold = *stop_below.get_or_insert(opt.grad_tol * grad.amax());
        if grad.amax() <= threshold {
            converged = true;
            break;
        }
        iterations += 1;
        match opt.kind {
            OptimizerKind::FixedStepGradient { step } => v.axpy(-step, &grad, 1.0),
            OptimizerKind::AdaptiveMoment {
                step,
                beta1,
                beta2,
                epsilon,
            } => {
                let t = iterations as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for i in 0..n {
                    let g = grad[i];
                    first[i] = beta1 * first[i] + (1.0 - beta1) * g;
                    second[i] = beta2 * second[i] + (1.0 - beta2) * g * g;
                    let m_hat = first[i] / c1;
                    let v_hat = second[i] / c2;
                    v[i] -= step * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
        }
    }

    let weights = p.p.as_matrix() * v;
    Ok(GradientFit {
        weights: weights.as_slice().to_vec(),
        losses,
        iterations,
        converged,
    })
}

/// Evaluates a fitted model on new rows.
pub fn predict(model: &FittedModel, rows: &[SampleRow]) -> Result<Vec<f64>> {
    if model.weights.is_empty() {
        return Ok(vec![model.intercept; rows.len()]);
    }
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let cross = cross_gram(&model.kernel, &model.train_rows, rows)?;
    let w = DVector::from_column_slice(&model.weights);
    Ok((cross.as_matrix() * w)
        .iter()
        .map(|v| v + model.intercept)
        .collect())
}

/// Fitted values `K w` on the training sample.
pub fn fitted_values(k: &DenseMatrix, w: &[f64]) -> Result<Vec<f64>> {
    check_square(k, w.len(), "fitted_values K")?;
    Ok((k.as_matrix() * DVector::from_column_slice(w)).as_slice().to_vec())
}

/// A model that predicts the train-target mean everywhere.
pub fn constant_baseline(y_train: &[f64]) -> Result<FittedModel> {
    if y_train.is_empty() {
        return Err(FairError::InvalidDimension("constant baseline of no targets".into()));
    }
    check_targets(y_train)?;
    let mean = y_train.iter().sum::<f64>() / y_train.len() as f64;
    FittedModel::new(
        Vec::new(),
        Vec::new(),
        KernelSpec::Linear,
        0.0,
        mean,
        ModelVariant::Constant,
    )
}

/// Train-sample terms of the fair-solution MSE bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    pub fair_mse: f64,
    pub unconstrained_mse: f64,
    /// `(1/n) ||K (I - P) w_star||²`.
    pub violation_term: f64,
}

impl BoundTerms {
    /// `unconstrained + violation - fair`; nonnegative up to round-off.
    pub fn slack(&self) -> f64 {
        self.unconstrained_mse + self.violation_term - self.fair_mse
    }
}

/// `w_star` must come from [`fit_unconstrained`] with `λ = 0`.
pub fn mse_bound_terms(
    k: &DenseMatrix,
    y: &[f64],
    w_star: &[f64],
    p: &ProjectionMatrix,
    rtol: f64,
) -> Result<BoundTerms> {
    let n = y.len();
    check_square(k, n, "mse_bound_terms K")?;
    if w_star.len() != n {
        return Err(FairError::InvalidDimension("w_star length".into()));
    }
    let w_fair = fit_fair(k, y, 0.0, p, rtol)?;
    let fair_mse = mse(&fitted_values(k, &w_fair)?, y)?;
    let unconstrained_mse = mse(&fitted_values(k, w_star)?, y)?;
    let ws = DVector::from_column_slice(w_star);
    let outside = &ws - p.p.as_matrix() * &ws;
    let violation = k.as_matrix() * outside;
    Ok(BoundTerms {
        fair_mse,
        unconstrained_mse,
        violation_term: violation.norm_squared() / n as f64,
    })
}
