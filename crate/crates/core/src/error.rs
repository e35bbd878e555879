use thiserror::Error;

/// Errors raised by the assimilation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid model config: {0}")]
    InvalidModel(String),

    #[error("invalid interval for {dim}: ({low}, {high})")]
    InvalidRange { dim: String, low: f64, high: f64 },

    #[error("invalid ensemble: {0}")]
    Ensemble(String),

    #[error("all weights are zero")]
    ZeroWeights,

    #[error("invalid re-probe config: {0}")]
    Reprobe(String),

    #[error("unknown variable name `{0}`")]
    UnknownVariable(String),

    #[error("invalid filter config: {0}")]
    FilterConfig(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("unpaired result: {0}")]
    Unpaired(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
