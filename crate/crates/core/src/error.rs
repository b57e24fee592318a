use thiserror::Error;
use tse_autodiff::AutodiffError;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("{what} too short: need at least {min} samples, got {got}")]
    TooShort { what: &'static str, min: usize, got: usize },
    #[error("fusion mode `{mode}` requires the {clue} clue")]
    MissingClue { mode: &'static str, clue: &'static str },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unknown condition label {0:?}")]
    UnknownCondition(String),
    #[error("mask out of range: {0}")]
    MaskOutOfRange(String),
    #[error("{0} is silent")]
    Silent(&'static str),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("need at least {need} speakers for disjoint splits, pool has {have}")]
    InsufficientSpeakers { need: usize, have: usize },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
