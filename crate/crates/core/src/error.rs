use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("class prior must lie strictly inside (0, 1), got {0}")]
    InvalidPrior(f64),

    #[error(
        "acceptance fraction {0} is inconsistent with any class prior (expected 3/4 <= value <= 1)"
    )]
    InvalidAcceptFraction(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("non-finite input: {0}")]
    NonFinite(f64),

    #[error("sampler cannot supply examples: {0}")]
    Sampler(String),

    #[error("distribution is not normalized (sum = {0})")]
    NotNormalized(f64),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{path}: row {row}: class token {token:?} is not covered by the binarization map")]
    UnmappedToken {
        path: PathBuf,
        row: usize,
        token: String,
    },

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

    /// Whether the error originates from reading or parsing external data,
    /// as opposed to an invalid request.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::UnmappedToken { .. }
                | Error::Csv(_)
                | Error::Json(_)
                | Error::Sampler(_)
        )
    }
}

pub(crate) fn check_same_len(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { left, right });
    }
    Ok(())
}
