use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown damage scenario tag `{0}`")]
    UnknownScenario(String),
    #[error("damage operator references leg {0}, legs are numbered 0..6")]
    InvalidLeg(usize),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid controller: {0}")]
    InvalidController(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("real-test budget exhausted after {used} tests")]
    BudgetExhausted { used: usize },
    #[error("evaluation failed: {0}")]
    Evaluation(String),
    #[error("no results found under {0}")]
    NoResults(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
