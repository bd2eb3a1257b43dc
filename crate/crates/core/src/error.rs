use thiserror::Error;

/// Errors produced by the auditing toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid scheme, forum, or run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A date or index fell outside the configured span.
    #[error("out of range: {0}")]
    Range(String),

    /// An operation was called with arguments that make no sense
    /// (empty inputs, missing prerequisites).
    #[error("usage error: {0}")]
    Usage(String),

    /// Inputs that should agree do not (missing candidate files,
    /// ground truth not covering the dump, ...).
    #[error("data integrity error: {0}")]
    DataIntegrity(String),

    /// Threshold calibration could not complete.
    #[error("calibration error: {0}")]
    Calibration(String),

    /// A structured text input failed to parse.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn range(msg: impl Into<String>) -> Self {
        Error::Range(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::DataIntegrity(msg.into())
    }

    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
