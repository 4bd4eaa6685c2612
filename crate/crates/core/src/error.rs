use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("model returned a non-finite value at parameters {params:?}")]
    NonFiniteModel { params: Vec<f64> },

    #[error("under-determined problem: {0}")]
    UnderDetermined(String),

    #[error("undefined estimate: {0}")]
    UndefinedEstimate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
