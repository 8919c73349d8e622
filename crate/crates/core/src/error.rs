use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid value for `{key}`: {message}")]
    InvalidParameter { key: String, message: String },
    #[error("covariance has zero trace")]
    ZeroTrace,
    #[error("{0}")]
    Scenario(String),
}

impl Error {
    pub fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter { key: key.into(), message: message.into() }
    }

    /// Prefixes the key path of a parameter error, e.g. `r` -> `model.r`.
    pub fn within(self, prefix: &str) -> Self {
        match self {
            Error::InvalidParameter { key, message } => {
                Error::InvalidParameter { key: format!("{prefix}.{key}"), message }
            }
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
