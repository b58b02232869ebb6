//! Datasets: synthetic generation, CSV ingestion, group encoding, splitting,
//! subsampling and target centering.
//!
//! Sensitive attributes are binary patterns. A pattern `(b_0, ..., b_{r-1})`
//! maps to the group code `Σ b_j 2^(r-1-j)`, so the first sensitive column is
//! the most significant bit and `k = 2^r`. A categorical schema reads one
//! column of integer codes directly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{FairError, Result};
use crate::kernels::SampleRow;

/// Stream ids; one master seed drives every operation through its own stream.
const STREAM_SYNTHETIC: u64 = 1;
const STREAM_SUBSAMPLE: u64 = 2;
const STREAM_SPLIT: u64 = 3;

pub const MAX_RETRIES: usize = 100;

/// Magnitude of the raw synthetic sensitive coordinates.
pub const SYNTHETIC_S_LEVEL: f64 = 0.1;

fn op_rng(seed: u64, stream: u64, attempt: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((stream << 32) | attempt as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Linear,
    Sine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub d: usize,
    pub e: usize,
    /// Standard deviation of the additive Gaussian noise.
    pub noise_sd: f64,
    pub link: Link,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            d: 5,
            e: 1,
            noise_sd: 0.1f64.sqrt(),
            link: Link::Linear,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.d < 1 || self.e < 1 {
            return Err(FairError::Range(format!(
                "synthetic config needs n >= 2, d >= 1, e >= 1 (got n={}, d={}, e={})",
                self.n, self.d, self.e
            )));
        }
        if self.e > 16 {
            return Err(FairError::Range(format!("e = {} gives too many groups", self.e)));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(FairError::Range(format!("noise_sd must be >= 0, got {}", self.noise_sd)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub target_column: String,
    pub sensitive_columns: Vec<String>,
    /// `None` selects every remaining column that parses as numeric.
    #[serde(default)]
    pub feature_columns: Option<Vec<String>>,
    /// Values strictly above the threshold become 1. Columns without a rule
    /// must already hold 0/1.
    #[serde(default)]
    pub binarize: BTreeMap<String, f64>,
    /// Read a single sensitive column as integer group codes `0..k` instead
    /// of a binary attribute.
    #[serde(default)]
    pub categorical: bool,
}

impl CsvSchema {
    fn validate(&self) -> Result<()> {
        if self.categorical && (self.sensitive_columns.len() != 1 || !self.binarize.is_empty()) {
            return Err(FairError::Schema(
                "a categorical schema takes exactly one sensitive column and no binarize rules".into(),
            ));
        }
        if self.sensitive_columns.len() > 16 {
            return Err(FairError::Schema("at most 16 sensitive columns are supported".into()));
        }
        if self.sensitive_columns.contains(&self.target_column) {
            return Err(FairError::Schema(format!(
                "target column '{}' is also listed as sensitive",
                self.target_column
            )));
        }
        if let Some(features) = &self.feature_columns {
            for f in features {
                if f == &self.target_column || self.sensitive_columns.contains(f) {
                    return Err(FairError::Schema(format!(
                        "column '{f}' cannot be both a feature and the target or a sensitive column"
                    )));
                }
            }
        }
        for c in self.binarize.keys() {
            if !self.sensitive_columns.contains(c) {
                return Err(FairError::Schema(format!("binarize rule for non-sensitive column '{c}'")));
            }
        }
        Ok(())
    }
}

/// Which scalar the sensitive kernels see in `SampleRow::s_value`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitiveEncoding {
    /// The group code.
    #[default]
    Code,
    /// The raw sensitive coordinate; single-attribute data only.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Synthetic {
        config: SyntheticConfig,
        seed: u64,
        attempts: usize,
    },
    Csv {
        path: PathBuf,
        schema: CsvSchema,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSet {
    pub rows: Vec<SampleRow>,
    pub y: Vec<f64>,
    pub k: usize,
    pub feature_names: Vec<String>,
    pub sensitive_names: Vec<String>,
    /// Raw sensitive coordinates per row, before encoding.
    pub sensitive_raw: Vec<Vec<f64>>,
    pub encoding: SensitiveEncoding,
    pub provenance: Provenance,
}

impl DataSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn group_codes(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.s_code).collect()
    }

    pub fn group_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        for r in &self.rows {
            counts[r.s_code] += 1;
        }
        counts
    }

    /// Groups in `0..k` with no rows.
    pub fn missing_groups(&self) -> Vec<usize> {
        self.group_counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(g, _)| g)
            .collect()
    }

    fn require_coverage(&self) -> Result<()> {
        match self.missing_groups().first() {
            Some(&group) => Err(FairError::MissingGroup { group, k: self.k }),
            None => Ok(()),
        }
    }

    /// Rewrites `s_value` for every row.
    pub fn with_encoding(mut self, encoding: SensitiveEncoding) -> Result<Self> {
        if encoding == SensitiveEncoding::Raw && self.sensitive_names.len() != 1 {
            return Err(FairError::Range(format!(
                "raw sensitive encoding needs exactly one sensitive attribute, found {}",
                self.sensitive_names.len()
            )));
        }
        for (row, raw) in self.rows.iter_mut().zip(&self.sensitive_raw) {
            row.s_value = match encoding {
                SensitiveEncoding::Code => row.s_code as f64,
                SensitiveEncoding::Raw => raw[0],
            };
        }
        self.encoding = encoding;
        Ok(self)
    }

    fn select(&self, idx: &[usize]) -> DataSet {
        DataSet {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            k: self.k,
            feature_names: self.feature_names.clone(),
            sensitive_names: self.sensitive_names.clone(),
            sensitive_raw: idx.iter().map(|&i| self.sensitive_raw[i].clone()).collect(),
            encoding: self.encoding,
            provenance: self.provenance.clone(),
        }
    }

    /// Writes features, raw sensitive columns and the target as CSV.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.feature_names.clone();
        header.extend(self.sensitive_names.iter().cloned());
        header.push("y".into());
        w.write_record(&header)?;
        for ((row, raw), y) in self.rows.iter().zip(&self.sensitive_raw).zip(&self.y) {
            let record: Vec<String> = row
                .x
                .iter()
                .chain(raw.iter())
                .chain(std::iter::once(y))
                .map(|v| format!("{v:?}"))
                .collect();
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn encode_bits(bits: &[bool]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

/// Draws `x ~ N(0, I_d)`, sensitive coordinates uniformly from `{±0.1}^e`,
/// `w ~ N(0, I_{d+e})` and `y = link([x, s]ᵀ w) + noise`. Draws again from a
/// fresh stream until every one of the `2^e` groups is present.
pub fn gen_synthetic(cfg: &SyntheticConfig, seed: u64) -> Result<DataSet> {
    cfg.validate()?;
    let k = 1usize << cfg.e;
    for attempt in 0..MAX_RETRIES {
        let mut rng = op_rng(seed, STREAM_SYNTHETIC, attempt);
        let w: Vec<f64> = (0..cfg.d + cfg.e).map(|_| rng.sample(StandardNormal)).collect();
        let mut rows = Vec::with_capacity(cfg.n);
        let mut raw = Vec::with_capacity(cfg.n);
        let mut y = Vec::with_capacity(cfg.n);
        for _ in 0..cfg.n {
            let x: Vec<f64> = (0..cfg.d).map(|_| rng.sample(StandardNormal)).collect();
            let bits: Vec<bool> = (0..cfg.e).map(|_| rng.random_bool(0.5)).collect();
            let s: Vec<f64> = bits
                .iter()
                .map(|&b| if b { SYNTHETIC_S_LEVEL } else { -SYNTHETIC_S_LEVEL })
                .collect();
            let lin: f64 = x.iter().chain(&s).zip(&w).map(|(a, b)| a * b).sum();
            let noise: f64 = rng.sample::<f64, _>(StandardNormal) * cfg.noise_sd;
            let signal = match cfg.link {
                Link::Linear => lin,
                Link::Sine => lin.sin(),
            };
            let s_code = encode_bits(&bits);
            rows.push(SampleRow { x, s_code, s_value: s_code as f64 });
            raw.push(s);
            y.push(signal + noise);
        }
        let ds = DataSet {
            rows,
            y,
            k,
            feature_names: (0..cfg.d).map(|j| format!("x{j}")).collect(),
            sensitive_names: (0..cfg.e).map(|j| format!("s{j}")).collect(),
            sensitive_raw: raw,
            encoding: SensitiveEncoding::Code,
            provenance: Provenance::Synthetic {
                config: cfg.clone(),
                seed,
                attempts: attempt + 1,
            },
        };
        if ds.missing_groups().is_empty() {
            return Ok(ds);
        }
    }
    Err(FairError::Split(format!(
        "could not cover all {k} groups with n={} after {MAX_RETRIES} draws",
        cfg.n
    )))
}

fn parse_field(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn row_list(rows: &[usize]) -> String {
    let shown: Vec<String> = rows.iter().take(10).map(|r| r.to_string()).collect();
    let more = if rows.len() > 10 { format!(" and {} more", rows.len() - 10) } else { String::new() };
    format!("{}{more}", shown.join(", "))
}

/// Reads a headered, comma-separated file. Row numbers in errors count the
/// header as line 1.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<DataSet> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let records: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;
    if records.is_empty() {
        return Err(FairError::Schema(format!("{} has no data rows", path.display())));
    }
    let column = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| FairError::Schema(format!("missing column '{name}'")))
    };
    let target = column(&schema.target_column)?;
    let sensitive: Vec<usize> = schema
        .sensitive_columns
        .iter()
        .map(|c| column(c))
        .collect::<Result<_>>()?;

    let features: Vec<usize> = match &schema.feature_columns {
        Some(names) => names.iter().map(|c| column(c)).collect::<Result<_>>()?,
        None => (0..header.len())
            .filter(|c| *c != target && !sensitive.contains(c))
            .filter(|&c| records.iter().all(|r| r.get(c).and_then(parse_field).is_some()))
            .collect(),
    };
    if features.is_empty() {
        return Err(FairError::Schema("no numeric feature columns".into()));
    }

    let mut bad_rows = Vec::new();
    let mut rows = Vec::with_capacity(records.len());
    let mut raw = Vec::with_capacity(records.len());
    let mut y = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let line = i + 2;
        let get = |c: usize| rec.get(c).and_then(parse_field);
        let x: Option<Vec<f64>> = features.iter().map(|&c| get(c)).collect();
        let target_value = get(target);
        let bits: Option<Vec<f64>> = sensitive
            .iter()
            .zip(&schema.sensitive_columns)
            .map(|(&c, name)| {
                let v = get(c)?;
                match schema.binarize.get(name) {
                    _ if schema.categorical => (v >= 0.0 && v.fract() == 0.0 && v < 1e6).then_some(v),
                    Some(&t) => Some(if v > t { 1.0 } else { 0.0 }),
                    None if v == 0.0 || v == 1.0 => Some(v),
                    None => None,
                }
            })
            .collect();
        match (x, target_value, bits) {
            (Some(x), Some(t), Some(bits)) => {
                let s_code = if schema.categorical {
                    bits[0] as usize
                } else {
                    encode_bits(&bits.iter().map(|&b| b == 1.0).collect::<Vec<_>>())
                };
                rows.push(SampleRow { x, s_code, s_value: s_code as f64 });
                raw.push(bits);
                y.push(t);
            }
            _ => bad_rows.push(line),
        }
    }
    if !bad_rows.is_empty() {
        return Err(FairError::Schema(format!(
            "unparseable or invalid required fields on line(s) {}",
            row_list(&bad_rows)
        )));
    }

    let k = if schema.categorical {
        rows.iter().map(|r| r.s_code + 1).max().unwrap_or(1)
    } else {
        1usize << schema.sensitive_columns.len()
    };
    let ds = DataSet {
        rows,
        y,
        k,
        feature_names: features.iter().map(|&c| header[c].clone()).collect(),
        sensitive_names: schema.sensitive_columns.clone(),
        sensitive_raw: raw,
        encoding: SensitiveEncoding::Code,
        provenance: Provenance::Csv {
            path: path.to_path_buf(),
            schema: schema.clone(),
        },
    };
    ds.require_coverage()?;
    Ok(ds)
}

/// Shuffled train/test split. Reshuffles until every group is present in
/// the training part; the test part may miss groups.
pub fn split(ds: &DataSet, train_fraction: f64, seed: u64) -> Result<(DataSet, DataSet)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(FairError::Range(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = ds.len();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(FairError::Split(format!(
            "fraction {train_fraction} of {n} rows leaves an empty split"
        )));
    }
    for attempt in 0..MAX_RETRIES {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut op_rng(seed, STREAM_SPLIT, attempt));
        let train = ds.select(&idx[..n_train]);
        if train.missing_groups().is_empty() {
            return Ok((train, ds.select(&idx[n_train..])));
        }
    }
    Err(FairError::Split(format!(
        "no split of {n} rows covered all {} groups in training after {MAX_RETRIES} attempts",
        ds.k
    )))
}

/// Subtracts the train-target mean from both splits.
pub fn center_targets(train: &DataSet, test: &DataSet) -> Result<(DataSet, DataSet, f64)> {
    if train.is_empty() {
        return Err(FairError::InvalidDimension("cannot center an empty training set".into()));
    }
    let mean = train.y.iter().sum::<f64>() / train.len() as f64;
    let shift = |ds: &DataSet| {
        let mut out = ds.clone();
        out.y.iter_mut().for_each(|v| *v -= mean);
        out
    };
    Ok((shift(train), shift(test), mean))
}

/// Uniform subsample of `n` rows covering every group.
pub fn subsample(ds: &DataSet, n: usize, seed: u64) -> Result<DataSet> {
    if n > ds.len() {
        return Err(FairError::Range(format!(
            "cannot subsample {n} rows from {}",
            ds.len()
        )));
    }
    for attempt in 0..MAX_RETRIES {
        let mut idx: Vec<usize> = (0..ds.len()).collect();
        idx.shuffle(&mut op_rng(seed, STREAM_SUBSAMPLE, attempt));
        idx.truncate(n);
        let out = ds.select(&idx);
        if out.missing_groups().is_empty() {
            return Ok(out);
        }
    }
    Err(FairError::Split(format!(
        "no subsample of {n} rows covered all {} groups after {MAX_RETRIES} attempts",
        ds.k
    )))
}
