use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("shape mismatch: expected {expected} values, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("negative distance {value} at ({row}, {col})")]
    NegativeDistance { row: usize, col: usize, value: f64 },

    #[error("gallery-gallery matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("gallery-gallery matrix has nonzero diagonal at {0}")]
    NonZeroDiagonal(usize),

    #[error("triangle inequality violated for ({0}, {1}, {2})")]
    TriangleInequality(usize, usize, usize),

    #[error("invalid registry: {0}")]
    InvalidRegistry(String),

    #[error("registry mismatch: {0}")]
    RegistryMismatch(String),

    #[error("too few candidate paths: need {needed}, have {available}")]
    TooFewCandidates { needed: usize, available: usize },

    #[error("empty gallery")]
    EmptyGallery,

    #[error("bad matrix header")]
    BadMatrixHeader,

    #[error("unsupported matrix file version {0}")]
    UnsupportedVersion(u16),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
