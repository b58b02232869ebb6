//! Subcommand implementations. Each writes its files under the configured
//! output directory and returns an error carrying the exit status on failure.

use std::path::Path;
use std::time::Instant;

use mpfair_core::prelude::*;
use serde::Serialize;

use crate::config::{DataSource, ExperimentConfig};
use crate::output::{
    group_histograms, write_histogram_csv, write_json, write_metrics_csv, write_tradeoff_csv, TradeoffRow,
};
use crate::pipeline::{prepare, run_methods, DataSummary, MethodResult, Prepared};
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize)]
struct Seeds {
    master: u64,
    generator: &'static str,
}

fn seeds(cfg: &ExperimentConfig) -> Seeds {
    Seeds {
        master: cfg.seed,
        generator: "chacha20, one stream per operation (data, subsample, split)",
    }
}

#[derive(Debug, Serialize)]
struct BasisSummary {
    m: usize,
    eigenvalues: Vec<f64>,
}

fn basis_summary(prep: &Prepared) -> BasisSummary {
    BasisSummary {
        m: prep.basis.m,
        eigenvalues: prep.basis.eigenvalues.clone(),
    }
}

#[derive(Debug, Serialize)]
struct RunReport<'a> {
    command: &'static str,
    library_version: &'static str,
    seeds: Seeds,
    config: &'a ExperimentConfig,
    data: &'a DataSummary,
    assumption1: Assumption1Report,
    fair_basis: BasisSummary,
    methods: &'a [MethodResult],
    prepare_seconds: f64,
    total_seconds: f64,
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path, CliError> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
    Ok(&cfg.out_dir)
}

pub fn fit_eval(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let start = Instant::now();
    let dir = out_dir(cfg)?;
    let prep = prepare(cfg)?;
    prep.require_assumption()?;
    let results = run_methods(cfg, &prep);
    write_metrics_csv(&dir.join("metrics.csv"), cfg, &results)?;
    let report = RunReport {
        command: "fit-eval",
        library_version: VERSION,
        seeds: seeds(cfg),
        config: cfg,
        data: &prep.summary,
        assumption1: prep.assumption,
        fair_basis: basis_summary(&prep),
        methods: &results,
        prepare_seconds: prep.seconds,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&dir.join("report.json"), &report)?;

    println!("{:<28} {:>12} {:>12} {:>12} {:>12}", "method", "mse_train", "mse_test", "smd_train", "smd_test");
    for r in &results {
        match (&r.train, &r.test, &r.error) {
            (Some(tr), Some(te), _) => println!(
                "{:<28} {:>12.6} {:>12.6} {:>12.3e} {:>12.3e}",
                r.method, tr.mse, te.mse, tr.smd, te.smd
            ),
            (_, _, Some(e)) => {
                eprintln!("warning: {} failed: {e}", r.method);
                println!("{:<28} failed", r.method);
            }
            _ => {}
        }
    }
    if !prep.summary.missing_test_groups.is_empty() {
        eprintln!("note: groups {:?} are absent from the test split", prep.summary.missing_test_groups);
    }
    println!("wrote {}", dir.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct IdentityCheck {
    asserted: bool,
    passed: bool,
    mse_failures: Vec<f64>,
    mpd_failures: Vec<f64>,
    worst_mse_gap: f64,
    worst_mpd_gap: f64,
}

#[derive(Debug, Serialize)]
struct TradeoffReport<'a> {
    command: &'static str,
    library_version: &'static str,
    seeds: Seeds,
    config: &'a ExperimentConfig,
    data: &'a DataSummary,
    /// Regression problems solved, independent of the grid size.
    fits: usize,
    identities: IdentityCheck,
    rows: &'a [TradeoffRow],
    total_seconds: f64,
}

pub fn tradeoff(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let start = Instant::now();
    let dir = out_dir(cfg)?;
    let prep = prepare(cfg)?;
    prep.require_assumption()?;
    let fail = |e: FairError| CliError::Invariant(e.to_string());
    let w_star = prep.unconstrained().map_err(fail)?;
    let w_fair = prep.fair().map_err(fail)?;

    let k = prep.train.k;
    let codes = prep.train.group_codes();
    let y = &prep.train.y;
    let (f_star, _) = prep.predictions(&w_star);
    let (f_fair, _) = prep.predictions(&w_fair);
    let l_star = mse(&f_star, y).map_err(fail)?;
    let l_fair = mse(&f_fair, y).map_err(fail)?;
    let mpd_star = mpd(&f_star, &codes, k).map_err(fail)?;
    let y_scale = mse(&vec![0.0; y.len()], y).map_err(fail)?;

    let mut rows = Vec::new();
    let mut check = IdentityCheck {
        asserted: prep.lambda == 0.0,
        passed: true,
        mse_failures: Vec::new(),
        mpd_failures: Vec::new(),
        worst_mse_gap: 0.0,
        worst_mpd_gap: 0.0,
    };
    for alpha in cfg.alpha_grid() {
        let w = fit_tradeoff(&w_fair, &w_star, alpha).map_err(|e| CliError::Input(e.to_string()))?;
        let (tr, te) = prep.evaluate_weights(&w).map_err(fail)?;
        let q = (1.0 - alpha) * (1.0 - alpha);
        let mse_gap = (tr.mse - (q * l_fair + (1.0 - q) * l_star)).abs();
        let mpd_gap = (tr.mpd - alpha * mpd_star).abs();
        check.worst_mse_gap = check.worst_mse_gap.max(mse_gap);
        check.worst_mpd_gap = check.worst_mpd_gap.max(mpd_gap);
        // floors keep the relative tests meaningful when L* or MPD* vanish
        if mse_gap > 1e-8 * l_star.max(1e-12 * y_scale) {
            check.mse_failures.push(alpha);
        }
        if mpd_gap > 1e-8 * mpd_star.max(1e-12 * y_scale.sqrt()) {
            check.mpd_failures.push(alpha);
        }
        rows.push(TradeoffRow {
            alpha,
            mse_train: tr.mse,
            mse_test: te.mse,
            smd_train: tr.smd,
            smd_test: te.smd,
        });
    }
    check.passed = check.mse_failures.is_empty() && check.mpd_failures.is_empty();
    write_tradeoff_csv(&dir.join("tradeoff.csv"), &rows)?;
    let report = TradeoffReport {
        command: "tradeoff",
        library_version: VERSION,
        seeds: seeds(cfg),
        config: cfg,
        data: &prep.summary,
        fits: 2,
        identities: check,
        rows: &rows,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&dir.join("tradeoff_report.json"), &report)?;
    let check = &report.identities;
    println!(
        "{} alphas; identity check {} (worst mse gap {:.2e}, worst mpd gap {:.2e})",
        rows.len(),
        match (check.asserted, check.passed) {
            (false, _) => "not asserted (lambda > 0)",
            (true, true) => "passed",
            (true, false) => "FAILED",
        },
        check.worst_mse_gap,
        check.worst_mpd_gap
    );
    println!("wrote {}", dir.display());
    if check.asserted && !check.passed {
        let mut offending: Vec<f64> = check.mse_failures.iter().chain(&check.mpd_failures).copied().collect();
        offending.sort_by(f64::total_cmp);
        offending.dedup();
        return Err(CliError::Invariant(format!("tradeoff identities fail at alpha {offending:?}")));
    }
    Ok(())
}

pub fn histograms(cfg: &ExperimentConfig, bins: usize) -> Result<(), CliError> {
    if bins < 2 {
        return Err(CliError::Input(format!("bins must be >= 2, got {bins}")));
    }
    let dir = out_dir(cfg)?;
    let prep = prepare(cfg)?;
    prep.require_assumption()?;
    let w = prep.fair().map_err(|e| CliError::Invariant(e.to_string()))?;
    let (train_pred, test_pred) = prep.predictions(&w);
    let k = prep.train.k;
    for (split, ds, pred) in [("train", &prep.train, &train_pred), ("test", &prep.test, &test_pred)] {
        let codes = ds.group_codes();
        for (what, values) in [("y", &ds.y), ("yhat", pred)] {
            let h = group_histograms(values, &codes, k, bins)?;
            write_histogram_csv(&dir.join(format!("hist_{what}_{split}.csv")), &h)?;
        }
    }
    println!("wrote 4 histogram files with {bins} bins to {}", dir.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub status: Status,
    pub detail: String,
}

fn row(check: &str, status: Status, detail: String) -> CheckRow {
    CheckRow { check: check.into(), status, detail }
}

fn pass_if(cond: bool) -> Status {
    if cond {
        Status::Pass
    } else {
        Status::Fail
    }
}

/// Runs the invariant suite on the configured instance.
pub fn check_rows(prep: &Prepared) -> Vec<CheckRow> {
    let mut rows = Vec::new();
    let a = prep.assumption;
    rows.push(row(
        "assumption1_rank",
        pass_if(a.satisfied),
        format!("centered rank {} (required k - 1 = {})", a.centered_rank, a.k - 1),
    ));
    let k = prep.train.k;
    let vacuous = k == 1;
    let codes = prep.train.group_codes();
    let km = prep.k_train.as_matrix();
    let k_norm = km.norm();

    if vacuous {
        rows.push(row("projector_idempotence", Status::Skip, "single group: nothing to project".into()));
    } else {
        let pm = prep.p.p.as_matrix();
        let gap = (km * (pm * pm - pm)).norm();
        rows.push(row(
            "projector_idempotence",
            pass_if(gap <= 1e-9 * k_norm.max(f64::MIN_POSITIVE)),
            format!("||K(PP - P)|| = {gap:.3e}, ||K|| = {k_norm:.3e}"),
        ));
    }

    let fits = [("unconstrained", prep.unconstrained()), ("fair", prep.fair())];
    for (name, fit) in &fits {
        let label = format!("mpd_le_dpd_{name}");
        match fit {
            Err(e) => rows.push(row(&label, Status::Fail, format!("fit failed: {e}"))),
            Ok(w) if vacuous => {
                let _ = w;
                rows.push(row(&label, Status::Skip, "single group".into()));
            }
            Ok(w) => {
                let (tr, te) = prep.predictions(w);
                let mut worst = f64::INFINITY;
                let mut detail = Vec::new();
                for (split, pred, ds) in [("train", &tr, &prep.train), ("test", &te, &prep.test)] {
                    match prep_metrics(pred, ds, k) {
                        Ok((m, d)) => {
                            worst = worst.min(d - m);
                            detail.push(format!("{split} mpd {m:.3e} dpd {d:.3e}"));
                        }
                        Err(e) => detail.push(format!("{split}: {e}")),
                    }
                }
                rows.push(row(&label, pass_if(worst >= -1e-12), detail.join("; ")));
            }
        }
    }

    match &fits[1].1 {
        Ok(_) if vacuous => rows.push(row("fair_train_mean_parity", Status::Skip, "single group".into())),
        Ok(w) => {
            let (tr, _) = prep.predictions(w);
            let spread = smd(&tr, &codes, k).unwrap_or(f64::INFINITY);
            let scale = std_dev(&tr);
            rows.push(row(
                "fair_train_mean_parity",
                pass_if(spread <= 1e-8 * scale.max(f64::MIN_POSITIVE) || spread == 0.0),
                format!("train smd {spread:.3e}, prediction sd {scale:.3e}"),
            ));
        }
        Err(e) => rows.push(row("fair_train_mean_parity", Status::Fail, e.to_string())),
    }

    match fit_unconstrained(&prep.k_train, &prep.train.y, 0.0, prep.rtol)
        .and_then(|ws| mse_bound_terms(&prep.k_train, &prep.train.y, &ws, &prep.p, prep.rtol))
    {
        Ok(t) => {
            let scale = mse(&vec![0.0; prep.train.len()], &prep.train.y).unwrap_or(1.0);
            rows.push(row(
                "fair_mse_bound",
                pass_if(t.slack() >= -1e-8 * scale),
                format!(
                    "fair {:.6e} <= unconstrained {:.6e} + violation {:.6e}",
                    t.fair_mse, t.unconstrained_mse, t.violation_term
                ),
            ));
        }
        Err(e) => rows.push(row("fair_mse_bound", Status::Fail, e.to_string())),
    }
    rows
}

fn prep_metrics(pred: &[f64], ds: &DataSet, k: usize) -> Result<(f64, f64), FairError> {
    let r = MetricReport::compute(Split::Train, pred, &ds.y, &ds.group_codes(), k, None)?;
    Ok((r.mpd, r.dpd.unwrap_or(f64::NAN)))
}

fn std_dev(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn check(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let prep = prepare(cfg)?;
    let rows = check_rows(&prep);
    println!("{:<26} {:<6} detail", "check", "status");
    for r in &rows {
        let status = match r.status {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Skip => "skip",
        };
        println!("{:<26} {:<6} {}", r.check, status, r.detail);
    }
    write_json(&dir.join("check.json"), &rows)?;
    let failed: Vec<&str> = rows.iter().filter(|r| r.status == Status::Fail).map(|r| r.check.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(format!("failed checks: {}", failed.join(", "))))
    }
}

pub fn gen_synthetic_csv(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let DataSource::Synthetic(syn) = &cfg.data else {
        return Err(CliError::Input("gen-synthetic needs a synthetic data source".into()));
    };
    let dir = out_dir(cfg)?;
    let ds = gen_synthetic(syn, cfg.seed).map_err(|e| CliError::Input(e.to_string()))?;
    let path = dir.join("synthetic.csv");
    ds.write_csv(&path).map_err(|e| CliError::Input(e.to_string()))?;
    println!("wrote {} rows, {} groups to {}", ds.len(), ds.k, path.display());
    Ok(())
}
