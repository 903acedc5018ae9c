use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: missing required column `{column}`")]
    Schema { path: PathBuf, column: String },

    #[error("{path}, row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: u64,
        message: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("parameterization error: {0}")]
    Parameterization(String),

    #[error("degenerate basis: {0}")]
    DegenerateBasis(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("simulation configuration error: {0}")]
    SimConfig(String),

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
