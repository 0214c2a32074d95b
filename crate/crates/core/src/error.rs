use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("timestamps must be strictly increasing (violated at index {index})")]
    NonMonotonic { index: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("too few points: need at least {need}, got {got}")]
    TooFewPoints { need: usize, got: usize },

    #[error("no cluster survived {0}")]
    NoCluster(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("ground-truth targets are required when loss_alpha < 1")]
    MissingTruth,

    #[error("query time {t} outside [{min}, {max}]")]
    OutOfRange { t: f64, min: f64, max: f64 },

    #[error("trajectories misaligned at index {index}: {reason}")]
    Misaligned { index: usize, reason: String },

    #[error("model fingerprint {found} does not match config fingerprint {expected}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn at_path(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}
