//! Experiment configuration: a single JSON document, optionally patched by
//! `--set key=value` overrides before it is deserialized.

use std::path::{Path, PathBuf};

use mpfair_core::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticConfig),
    Csv { path: PathBuf, schema: CsvSchema },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingChoice {
    /// Raw values for a single sensitive attribute, group codes otherwise.
    #[default]
    Auto,
    Code,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    /// Kernel on the non-sensitive features.
    pub x: KernelSpec,
    /// Kernel on the sensitive part inside the regression model.
    pub s_in_model: KernelSpec,
    pub mode: CompositionMode,
    /// Kernel defining the fairness constraint; `None` picks the default for
    /// the observed number of groups.
    pub sensitive: Option<KernelSpec>,
    pub sensitive_flavor: SensitiveFlavor,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            x: KernelSpec::Linear,
            s_in_model: KernelSpec::Polynomial { degree: 1, offset: 0.0 },
            mode: CompositionMode::Sum,
            sensitive: None,
            sensitive_flavor: SensitiveFlavor::Polynomial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodConfig {
    Constant,
    Unconstrained,
    Fair,
    Fpr {
        zetas: Vec<f64>,
    },
    Tradeoff {
        #[serde(default)]
        alphas: Option<Vec<f64>>,
    },
    Gradient {
        loss: LossSpec,
        #[serde(default)]
        optimizer: OptimizerConfig,
    },
}

/// `0, 1/50, ..., 1`.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=50).map(|i| i as f64 / 50.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Mse,
    Smd,
    Dpd,
    CovNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default)]
    pub sensitive_encoding: EncodingChoice,
    #[serde(default)]
    pub subsample: Option<usize>,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    pub methods: Vec<MethodConfig>,
    #[serde(default = "all_metrics")]
    pub metrics: Vec<MetricName>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_fraction() -> f64 {
    0.8
}

fn default_rtol() -> f64 {
    DEFAULT_RTOL
}

fn all_metrics() -> Vec<MetricName> {
    vec![MetricName::Mse, MetricName::Smd, MetricName::Dpd, MetricName::CovNorm]
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic(SyntheticConfig::default()),
            sensitive_encoding: EncodingChoice::Auto,
            subsample: None,
            train_fraction: default_fraction(),
            seed: 0,
            kernel: KernelConfig::default(),
            lambda: 0.0,
            rtol: DEFAULT_RTOL,
            methods: vec![
                MethodConfig::Constant,
                MethodConfig::Unconstrained,
                MethodConfig::Fair,
                MethodConfig::Fpr { zetas: vec![10.0, 1000.0] },
                MethodConfig::Tradeoff { alphas: None },
            ],
            metrics: all_metrics(),
            out_dir: default_out_dir(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Input(msg));
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            return bad(format!("rtol must lie in (0, 1), got {}", self.rtol));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        for m in &self.methods {
            match m {
                MethodConfig::Tradeoff { alphas: Some(a) } => {
                    if a.is_empty() || a.iter().any(|v| !(0.0..=1.0).contains(v)) {
                        return bad(format!("alpha grid must be a nonempty subset of [0, 1], got {a:?}"));
                    }
                }
                MethodConfig::Fpr { zetas }
                    if zetas.is_empty() || zetas.iter().any(|z| !(*z >= 0.0 && z.is_finite())) =>
                {
                    return bad(format!("fpr zetas must be nonempty and >= 0, got {zetas:?}"));
                }
                _ => {}
            }
        }
        for spec in [&self.kernel.x, &self.kernel.s_in_model] {
            spec.validate().map_err(|e| CliError::Input(e.to_string()))?;
        }
        if let Some(s) = &self.kernel.sensitive {
            s.validate().map_err(|e| CliError::Input(e.to_string()))?;
        }
        Ok(())
    }

    pub fn alpha_grid(&self) -> Vec<f64> {
        self.methods
            .iter()
            .find_map(|m| match m {
                MethodConfig::Tradeoff { alphas } => Some(alphas.clone().unwrap_or_else(default_alpha_grid)),
                _ => None,
            })
            .unwrap_or_else(default_alpha_grid)
    }

    pub fn wants(&self, metric: MetricName) -> bool {
        self.metrics.contains(&metric)
    }
}

/// Loads the config (or the default one), applies overrides in order and
/// deserializes the result.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str::<Value>(&text)
                .map_err(|e| CliError::Input(format!("config {} is not valid JSON: {e}", p.display())))?
        }
        None => serde_json::to_value(ExperimentConfig::default()).expect("default config serializes"),
    };
    for item in overrides {
        apply_override(&mut doc, item)?;
    }
    let cfg: ExperimentConfig =
        serde_json::from_value(doc).map_err(|e| CliError::Input(format!("invalid config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// `a.b.0.c=value`; the value is parsed as JSON and falls back to a string.
pub fn apply_override(doc: &mut Value, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Input(format!("override '{item}' is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Input(format!("bad override key '{key}'")));
    }
    let mut node = doc;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| CliError::Input(format!("'{part}' in '{key}' is not an array index")))?;
                let len = items.len();
                items
                    .get_mut(idx)
                    .ok_or_else(|| CliError::Input(format!("index {idx} out of range (len {len}) in '{key}'")))?
            }
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), Value::Null);
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Null => {
                *node = Value::Object(Default::default());
                let Value::Object(map) = node else { unreachable!() };
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            _ => return Err(CliError::Input(format!("cannot descend into '{part}' of '{key}'"))),
        };
    }
    *node = value;
    Ok(())
}
