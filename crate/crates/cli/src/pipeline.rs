//! Data preparation, fitting and evaluation shared by the subcommands.

use std::time::Instant;

use mpfair_core::prelude::*;
use serde::Serialize;

use crate::config::{DataSource, EncodingChoice, ExperimentConfig, MethodConfig, MetricName};
use crate::CliError;

fn input(e: FairError) -> CliError {
    CliError::Input(e.to_string())
}

fn numeric(e: FairError) -> CliError {
    CliError::Invariant(e.to_string())
}

#[derive(Debug, Clone, Serialize)]
pub struct DataSummary {
    pub n_total: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub k: usize,
    pub sensitive_encoding: SensitiveEncoding,
    pub feature_names: Vec<String>,
    pub sensitive_names: Vec<String>,
    pub train_group_counts: Vec<usize>,
    pub test_group_counts: Vec<usize>,
    pub missing_test_groups: Vec<usize>,
    pub train_target_mean: f64,
    pub provenance: Provenance,
}

/// Everything needed to fit and evaluate: centered splits, Gram matrices and
/// the fair subspace of the training sample.
pub struct Prepared {
    pub train: DataSet,
    pub test: DataSet,
    pub summary: DataSummary,
    pub joint: KernelSpec,
    pub sensitive: KernelSpec,
    pub k_train: DenseMatrix,
    /// `test x train`.
    pub k_cross: DenseMatrix,
    pub ks_train: DenseMatrix,
    pub ks_test: Option<DenseMatrix>,
    pub assumption: Assumption1Report,
    pub basis: FairBasis,
    pub p: ProjectionMatrix,
    pub rtol: f64,
    pub lambda: f64,
    pub seconds: f64,
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<DataSet, CliError> {
    let ds = match &cfg.data {
        DataSource::Synthetic(syn) => gen_synthetic(syn, cfg.seed).map_err(input)?,
        DataSource::Csv { path, schema } => load_csv(path, schema).map_err(input)?,
    };
    let encoding = match cfg.sensitive_encoding {
        EncodingChoice::Code => SensitiveEncoding::Code,
        EncodingChoice::Raw => SensitiveEncoding::Raw,
        EncodingChoice::Auto if ds.sensitive_names.len() == 1 => SensitiveEncoding::Raw,
        EncodingChoice::Auto => SensitiveEncoding::Code,
    };
    ds.with_encoding(encoding).map_err(input)
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, CliError> {
    let start = Instant::now();
    let ds = load_data(cfg)?;
    let n_total = ds.len();
    let ds = match cfg.subsample {
        Some(n) => subsample(&ds, n, cfg.seed).map_err(input)?,
        None => ds,
    };
    let (train, test) = split(&ds, cfg.train_fraction, cfg.seed).map_err(input)?;
    let (train, test, mean) = center_targets(&train, &test).map_err(input)?;

    let joint = KernelSpec::composed(cfg.kernel.x.clone(), cfg.kernel.s_in_model.clone(), cfg.kernel.mode);
    let sensitive = match &cfg.kernel.sensitive {
        Some(s) => s.clone(),
        None => default_sensitive_kernel(train.k, cfg.kernel.sensitive_flavor).map_err(input)?,
    };
    let k_train = gram(&joint, &train.rows).map_err(input)?;
    let k_cross = cross_gram(&joint, &train.rows, &test.rows).map_err(input)?;
    let ks_train = gram(&sensitive, &train.rows).map_err(input)?;
    let ks_test = if cfg.metrics.contains(&MetricName::CovNorm) {
        Some(gram(&sensitive, &test.rows).map_err(input)?)
    } else {
        None
    };

    let factor = SensitiveFactor::from_gram(&ks_train, cfg.rtol).map_err(numeric)?;
    let assumption = check_assumption1_with(&factor, &train.group_codes(), train.k).map_err(input)?;
    let basis = build_fair_basis_from_factor(&k_train, &factor, cfg.rtol).map_err(numeric)?;
    let p = projection_matrix(&basis, &k_train).map_err(numeric)?;

    let summary = DataSummary {
        n_total,
        n_train: train.len(),
        n_test: test.len(),
        k: train.k,
        sensitive_encoding: train.encoding,
        feature_names: train.feature_names.clone(),
        sensitive_names: train.sensitive_names.clone(),
        train_group_counts: train.group_counts(),
        test_group_counts: test.group_counts(),
        missing_test_groups: test.missing_groups(),
        train_target_mean: mean,
        provenance: train.provenance.clone(),
    };
    Ok(Prepared {
        train,
        test,
        summary,
        joint,
        sensitive,
        k_train,
        k_cross,
        ks_train,
        ks_test,
        assumption,
        basis,
        p,
        rtol: cfg.rtol,
        lambda: cfg.lambda,
        seconds: start.elapsed().as_secs_f64(),
    })
}

impl Prepared {
    pub fn require_assumption(&self) -> Result<(), CliError> {
        if self.assumption.satisfied {
            Ok(())
        } else {
            Err(CliError::Assumption(format!(
                "centered sensitive Gram has rank {} but k - 1 = {} is required; choose a sensitive kernel that separates the groups",
                self.assumption.centered_rank,
                self.assumption.k - 1
            )))
        }
    }

    pub fn unconstrained(&self) -> Result<Vec<f64>, FairError> {
        fit_unconstrained(&self.k_train, &self.train.y, self.lambda, self.rtol)
    }

    pub fn fair(&self) -> Result<Vec<f64>, FairError> {
        fit_fair(&self.k_train, &self.train.y, self.lambda, &self.p, self.rtol)
    }

    /// Centered train and test predictions of kernel weights.
    pub fn predictions(&self, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let train = mat_vec(&self.k_train, w).expect("weights match the training sample");
        let test = mat_vec(&self.k_cross, w).expect("weights match the training sample");
        (train, test)
    }

    pub fn evaluate(&self, train_pred: &[f64], test_pred: &[f64]) -> Result<(MetricReport, MetricReport), FairError> {
        let k = self.train.k;
        let tr = MetricReport::compute(
            Split::Train,
            train_pred,
            &self.train.y,
            &self.train.group_codes(),
            k,
            Some(&self.ks_train),
        )?;
        let te = MetricReport::compute(
            Split::Test,
            test_pred,
            &self.test.y,
            &self.test.group_codes(),
            k,
            self.ks_test.as_ref(),
        )?;
        Ok((tr, te))
    }

    pub fn evaluate_weights(&self, w: &[f64]) -> Result<(MetricReport, MetricReport), FairError> {
        let (tr, te) = self.predictions(w);
        self.evaluate(&tr, &te)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodResult {
    pub method: String,
    /// Sort key: method family, then its numeric parameter.
    #[serde(skip)]
    pub order: (String, f64),
    pub seconds: f64,
    pub train: Option<MetricReport>,
    pub test: Option<MetricReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl MethodResult {
    fn new(method: String, family: &str, param: f64) -> Self {
        Self {
            method,
            order: (family.to_string(), param),
            seconds: 0.0,
            train: None,
            test: None,
            iterations: None,
            error: None,
        }
    }
}

pub fn fmt_param(v: f64) -> String {
    format!("{v}")
}

/// Fits every configured method. Failures are recorded per method; the
/// unconstrained and fair solutions are computed at most once.
pub fn run_methods(cfg: &ExperimentConfig, prep: &Prepared) -> Vec<MethodResult> {
    let mut cache_unc: Option<(Result<Vec<f64>, String>, f64)> = None;
    let mut cache_fair: Option<(Result<Vec<f64>, String>, f64)> = None;
    let timed = |f: &dyn Fn() -> Result<Vec<f64>, FairError>| {
        let t = Instant::now();
        let r = f().map_err(|e| e.to_string());
        (r, t.elapsed().as_secs_f64())
    };
    let mut out = Vec::new();

    for method in &cfg.methods {
        match method {
            MethodConfig::Constant => {
                let mut r = MethodResult::new("constant".into(), "constant", 0.0);
                let t = Instant::now();
                let outcome = constant_baseline(&prep.train.y).and_then(|m| {
                    let tr = vec![m.intercept; prep.train.len()];
                    let te = vec![m.intercept; prep.test.len()];
                    prep.evaluate(&tr, &te)
                });
                record(&mut r, outcome, t);
                out.push(r);
            }
            MethodConfig::Unconstrained => {
                let (w, secs) = cache_unc.get_or_insert_with(|| timed(&|| prep.unconstrained())).clone();
                out.push(from_weights(prep, "unconstrained".into(), "unconstrained", 0.0, w, secs));
            }
            MethodConfig::Fair => {
                let (w, secs) = cache_fair.get_or_insert_with(|| timed(&|| prep.fair())).clone();
                out.push(from_weights(prep, "fair".into(), "fair", 0.0, w, secs));
            }
            MethodConfig::Fpr { zetas } => {
                for &zeta in zetas {
                    let (w, secs) = timed(&|| {
                        fit_fpr(&prep.k_train, &prep.train.y, prep.lambda, zeta, &prep.basis, prep.rtol)
                    });
                    let name = format!("fpr(zeta={})", fmt_param(zeta));
                    out.push(from_weights(prep, name, "fpr", zeta, w, secs));
                }
            }
            MethodConfig::Tradeoff { alphas } => {
                let (wu, su) = cache_unc.get_or_insert_with(|| timed(&|| prep.unconstrained())).clone();
                let (wf, sf) = cache_fair.get_or_insert_with(|| timed(&|| prep.fair())).clone();
                let grid = alphas.clone().unwrap_or_else(crate::config::default_alpha_grid);
                for alpha in grid {
                    let t = Instant::now();
                    let w = match (&wf, &wu) {
                        (Ok(f), Ok(u)) => fit_tradeoff(f, u, alpha).map_err(|e| e.to_string()),
                        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
                    };
                    let secs = t.elapsed().as_secs_f64() + su + sf;
                    let name = format!("tradeoff(alpha={})", fmt_param(alpha));
                    out.push(from_weights(prep, name, "tradeoff", alpha, w, secs));
                }
            }
            MethodConfig::Gradient { loss, optimizer } => {
                let name = format!("gradient({})", loss.name());
                let mut r = MethodResult::new(name, "gradient", 0.0);
                let t = Instant::now();
                match fit_gradient(&prep.k_train, &prep.p, &prep.train.y, *loss, optimizer) {
                    Ok(fit) => {
                        r.iterations = Some(fit.iterations);
                        record(&mut r, prep.evaluate_weights(&fit.weights), t);
                    }
                    Err(e) => {
                        r.error = Some(e.to_string());
                        r.seconds = t.elapsed().as_secs_f64();
                    }
                }
                out.push(r);
            }
        }
    }
    out.sort_by(|a, b| a.order.0.cmp(&b.order.0).then(a.order.1.total_cmp(&b.order.1)));
    out
}

fn record(r: &mut MethodResult, outcome: Result<(MetricReport, MetricReport), FairError>, t: Instant) {
    r.seconds = t.elapsed().as_secs_f64();
    match outcome {
        Ok((tr, te)) => {
            r.train = Some(tr);
            r.test = Some(te);
        }
        Err(e) => r.error = Some(e.to_string()),
    }
}

fn from_weights(
    prep: &Prepared,
    name: String,
    family: &str,
    param: f64,
    w: Result<Vec<f64>, String>,
    secs: f64,
) -> MethodResult {
    let mut r = MethodResult::new(name, family, param);
    match w {
        Ok(w) => {
            let t = Instant::now();
            record(&mut r, prep.evaluate_weights(&w), t);
            r.seconds += secs;
        }
        Err(e) => {
            r.error = Some(e);
            r.seconds = secs;
        }
    }
    r
}
