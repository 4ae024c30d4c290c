use thiserror::Error;

/// Errors produced anywhere in the compression pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Caller supplied something malformed: wrong shape, empty input, bad parameter.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Input is well-formed but the quantity is mathematically undefined for it.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative method failed (no convergence, divergence to NaN).
    #[error("numeric failure: {message}")]
    Numeric {
        message: String,
        /// Last value produced before giving up, when one exists.
        last_value: Option<f64>,
    },

    /// A serialized container failed validation.
    #[error("corrupt data in {field}: {message}")]
    CorruptData { field: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>, last_value: Option<f64>) -> Self {
        Error::Numeric {
            message: msg.into(),
            last_value,
        }
    }

    pub(crate) fn corrupt(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::CorruptData {
            field: field.into(),
            message: msg.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
