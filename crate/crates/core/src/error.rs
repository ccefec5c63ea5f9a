use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameterization (bad spec fields, window too small, ...).
    #[error("configuration error: {0}")]
    Config(String),
    /// Input outside the mathematical domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),
    /// A numerical procedure failed to reach its accuracy target.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// An operation was called with arguments it is not meant for.
    #[error("usage error: {0}")]
    Usage(String),
    /// Monte Carlo estimation could not produce an estimate.
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
    pub(crate) fn estimation(msg: impl Into<String>) -> Self {
        Error::Estimation(msg.into())
    }
}
