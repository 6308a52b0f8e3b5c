use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("batch size {0} has no profiled CPU coefficients")]
    UnknownBatch(u32),

    #[error("{what} {value} outside [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("timeouts must be passed in ascending order (t1 = {t1} > t2 = {t2})")]
    MisorderedTimeouts { t1: f64, t2: f64 },

    #[error("group has no timeout for application `{0}`")]
    IncompleteGroup(String),

    #[error("tau estimation failed: {0}")]
    TauEstimation(String),

    #[error("inconsistent profile: {0}")]
    InconsistentProfile(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
