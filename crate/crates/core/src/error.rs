use thiserror::Error;

pub type Result<T> = std::result::Result<T, SbartError>;

#[derive(Debug, Error)]
pub enum SbartError {
    /// An argument fell outside the domain of a density or transform.
    #[error("domain error: {0}")]
    Domain(String),

    /// A tree or grouping structure violated its shape invariants.
    #[error("structural error: {0}")]
    Structure(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    /// Input data problems (shape mismatch, NaN cells, constant response).
    #[error("data error: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SbartError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        SbartError::Domain(msg.into())
    }

    pub(crate) fn structure(msg: impl Into<String>) -> Self {
        SbartError::Structure(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        SbartError::Data(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        SbartError::Config(msg.into())
    }
}
