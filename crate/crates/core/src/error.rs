use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AmsError>;

/// Errors raised anywhere in the scanning pipeline.
#[derive(Debug, Error)]
pub enum AmsError {
    /// Parameters or arguments outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Data that makes standardisation impossible (e.g. zero sample variance).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// No scale survives a restriction, or a system has no regions at all.
    #[error("region system is empty: {0}")]
    EmptySystem(String),

    #[error("size mismatch: {0}")]
    Size(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("negative count {value} at index {index}")]
    NegativeCount { index: usize, value: f64 },

    #[error("corrupt quantile cache {path}: {reason}")]
    CacheCorrupt { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Degenerate,
    Internal,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Degenerate => 4,
            ErrorCategory::Internal => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Data => "data",
            ErrorCategory::Degenerate => "degenerate-data",
            ErrorCategory::Internal => "internal",
        }
    }
}

impl AmsError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            AmsError::Config(_) | AmsError::EmptySystem(_) | AmsError::Domain(_) => {
                ErrorCategory::Config
            }
            AmsError::Size(_)
            | AmsError::Parse { .. }
            | AmsError::Shape(_)
            | AmsError::NegativeCount { .. }
            | AmsError::Io(_) => ErrorCategory::Data,
            AmsError::DegenerateData(_) => ErrorCategory::Degenerate,
            AmsError::CacheCorrupt { .. } => ErrorCategory::Internal,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        AmsError::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        AmsError::Config(msg.into())
    }
}
