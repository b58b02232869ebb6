//! CSV and JSON result files.

use std::path::Path;

use mpfair_core::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, MetricName};
use crate::pipeline::MethodResult;
use crate::CliError;

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>, wanted: bool) -> String {
    match v {
        Some(v) if wanted => num(v),
        _ => String::new(),
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Input(e.to_string())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// `method, split, mse, smd, dpd, cov_norm`; unrequested metrics and failed
/// methods leave empty cells.
pub fn write_metrics_csv(path: &Path, cfg: &ExperimentConfig, results: &[MethodResult]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["method", "split", "mse", "smd", "dpd", "cov_norm"]).map_err(csv_err)?;
    for r in results {
        for (split, report) in [(Split::Train, &r.train), (Split::Test, &r.test)] {
            let cells = match report {
                Some(m) => [
                    opt(Some(m.mse), cfg.wants(MetricName::Mse)),
                    opt(Some(m.smd), cfg.wants(MetricName::Smd)),
                    opt(m.dpd, cfg.wants(MetricName::Dpd)),
                    opt(m.cov_norm, cfg.wants(MetricName::CovNorm)),
                ],
                None => Default::default(),
            };
            let mut rec = vec![r.method.clone(), split.as_str().to_string()];
            rec.extend(cells);
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub alpha: f64,
    pub mse_train: f64,
    pub mse_test: f64,
    pub smd_train: f64,
    pub smd_test: f64,
}

pub fn write_tradeoff_csv(path: &Path, rows: &[TradeoffRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["alpha", "mse_train", "mse_test", "smd_train", "smd_test"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([num(r.alpha), num(r.mse_train), num(r.mse_test), num(r.smd_train), num(r.smd_test)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub group: usize,
    pub bin_left: f64,
    pub bin_right: f64,
    pub density: f64,
}

/// Per-group normalized histograms on a range shared by all groups. A
/// degenerate range `[v, v]` is widened to `[v - 0.5, v + 0.5]`.
pub fn group_histograms(values: &[f64], codes: &[usize], k: usize, bins: usize) -> Result<Vec<HistogramBin>, CliError> {
    if bins < 2 {
        return Err(CliError::Input(format!("bins must be >= 2, got {bins}")));
    }
    if values.is_empty() {
        return Ok(Vec::new());
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![vec![0usize; bins]; k];
    for (&v, &g) in values.iter().zip(codes) {
        let idx = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[g][idx] += 1;
    }
    let mut out = Vec::new();
    for (g, row) in counts.iter().enumerate() {
        let total: usize = row.iter().sum();
        if total == 0 {
            continue;
        }
        for (b, &c) in row.iter().enumerate() {
            let left = lo + b as f64 * width;
            let right = if b + 1 == bins { hi } else { lo + (b + 1) as f64 * width };
            out.push(HistogramBin {
                group: g,
                bin_left: left,
                bin_right: right,
                density: c as f64 / (total as f64 * width),
            });
        }
    }
    Ok(out)
}

pub fn write_histogram_csv(path: &Path, bins: &[HistogramBin]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["group", "bin_left", "bin_right", "density"]).map_err(csv_err)?;
    for b in bins {
        w.write_record([b.group.to_string(), num(b.bin_left), num(b.bin_right), num(b.density)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
