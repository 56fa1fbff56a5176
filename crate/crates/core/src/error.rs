use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("oscillator {index} has norm {norm}, expected 1 within {tolerance:e}")]
    NotNormalized {
        index: usize,
        norm: f64,
        tolerance: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integration failure at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    #[error("excluded initial datum: correlation z0 = {re} + {im}i equals -1")]
    ExcludedInitialDatum { re: f64, im: f64 },

    #[error("reduction inapplicable: {0}")]
    ReductionInapplicable(String),

    #[error("insufficient points for rate fit: {found} above floor, need {needed}")]
    InsufficientPoints { found: usize, needed: usize },

    #[error("internal consistency violated: {0}")]
    Consistency(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error("run in {dir} failed: {message}")]
    RunFailed { dir: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
