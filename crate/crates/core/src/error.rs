use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = BsiError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BsiError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure at probe {probe}: {detail}")]
    NumericalFailure { probe: usize, detail: String },

    #[error("perturbation too large: |sigma| reached {value:.6e} in layer {layer}, limit {limit:.6e}")]
    PerturbationTooLarge { layer: usize, value: f64, limit: f64 },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("insufficient spectrum: {0}")]
    InsufficientSpectrum(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("corrupt checkpoint header: {0}")]
    CorruptHeader(String),

    #[error("truncated payload: tensor `{tensor}` needs {needed} bytes, {available} available")]
    TruncatedPayload {
        tensor: String,
        needed: usize,
        available: usize,
    },

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl BsiError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        BsiError::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BsiError::Io {
            path: path.into(),
            source,
        }
    }
}
