use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch on axis `{axis}`: expected {expected}, got {actual}")]
    Dimension {
        axis: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("gradient check failed for `{name}`: non-finite gradient")]
    NonFiniteGradient { name: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDtype(i16),

    #[error("unsupported volume shape: {0}")]
    UnsupportedShape(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("training diverged at step {step}: {what} is not finite")]
    Divergence { step: u64, what: String },

    #[error("corrupt checkpoint: {0}")]
    Corruption(String),

    #[error("unsupported checkpoint format version {0}")]
    Version(u32),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
