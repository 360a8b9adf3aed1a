use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time range: t0={t0} must be < t1={t1}")]
    InvalidRange { t0: u64, t1: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid event stream: {0}")]
    Validation(String),

    #[error("cannot build instances: {0}")]
    Instance(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{}: bad format: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("{}: truncated record region: expected {expected} bytes, found {actual}", path.display())]
    Corruption { path: PathBuf, expected: u64, actual: u64 },

    #[error("{}: manifest error: {msg}", path.display())]
    Manifest { path: PathBuf, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Io,
    Validation,
}

impl ErrorClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Config => "config",
            ErrorClass::Io => "io",
            ErrorClass::Validation => "validation",
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidRange { .. } | Error::Config(_) | Error::Domain(_) => ErrorClass::Config,
            Error::Io { .. } | Error::Image { .. } => ErrorClass::Io,
            Error::Shape(_)
            | Error::Validation(_)
            | Error::Instance(_)
            | Error::Parse { .. }
            | Error::Format { .. }
            | Error::Corruption { .. }
            | Error::Manifest { .. } => ErrorClass::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
