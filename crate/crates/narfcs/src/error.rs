//! Crate-wide error type.
//!
//! Variants are grouped by how the CLI maps them to exit codes: configuration
//! problems (bad config file, invalid spec, malformed ums expression) exit
//! with 2, data problems (missing files, malformed CSV, domain violations)
//! with 3, and numerical failures (singular systems, failed calibrations)
//! with 4.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: config file contents, spec/ums validation.
    #[error("config error: {0}")]
    Config(String),

    /// Invalid or unreadable data: CSV parsing, domain violations, unknown
    /// variables.
    #[error("data error: {0}")]
    Data(String),

    /// Numerical failure: singular systems without a ridge fallback,
    /// non-convergent calibration, untunable simulation rates.
    #[error("numerical error: {0}")]
    Numeric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code used by the CLI for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Io { .. } => 3,
            Error::Numeric(_) => 4,
        }
    }
}
