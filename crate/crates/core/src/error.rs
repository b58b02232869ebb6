use thiserror::Error;

/// Errors raised by the fair-regression library.
#[derive(Debug, Error)]
pub enum FairError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e}, allowed {allowed:e})")]
    NotSymmetric { asymmetry: f64, allowed: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("group {group} has no samples (k = {k})")]
    MissingGroup { group: usize, k: usize },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("optimizer diverged at iteration {iteration}: loss = {loss}")]
    Divergence { iteration: usize, loss: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, FairError>;
