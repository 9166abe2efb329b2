use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// The variants are coarse on purpose: the CLI maps each family onto a
/// stable exit code (see [`Error::category`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("feature/geometry mismatch: {0}")]
    Feature(String),

    #[error("bad magic in tensor file {path:?}")]
    BadMagic { path: PathBuf },

    #[error("truncated tensor file {path:?}: expected {expected} payload bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("unknown dtype code {code} in {path:?}")]
    UnknownDtype { path: PathBuf, code: u8 },

    #[error("unsupported tensor file version {0}")]
    UnsupportedVersion(u32),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("parameter {name}: shape {found:?} does not match expected {expected:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("non-finite loss at step {step} (lr {lr:e}, grad norm {grad_norm:e})")]
    NonFiniteLoss { step: usize, lr: f64, grad_norm: f64 },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("I/O error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Error family, used for exit codes and the `error[...]` prefix of the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Io,
    Feature,
    NonFinite,
    Other,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::Json(_) | Error::InvalidArgument(_) => ErrorCategory::Config,
            Error::Io { .. }
            | Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::UnknownDtype { .. }
            | Error::UnsupportedVersion(_)
            | Error::Csv(_)
            | Error::Manifest(_)
            | Error::Checkpoint(_)
            | Error::ParamShape { .. } => ErrorCategory::Io,
            Error::Feature(_) => ErrorCategory::Feature,
            Error::NonFinite(_) | Error::NonFiniteLoss { .. } => ErrorCategory::NonFinite,
            Error::Shape { .. } => ErrorCategory::Other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
