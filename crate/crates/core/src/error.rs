use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("basis index {index} out of range for family of dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("point kind not admissible: {0}")]
    InadmissiblePoint(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),

    #[error("rank deficient family: {0}")]
    RankDeficient(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("missing required config key `{0}`")]
    MissingKey(String),

    #[error("invalid value for config key `{key}`: {reason}")]
    InvalidKey { key: String, reason: String },

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
