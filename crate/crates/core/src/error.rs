use alloc::string::String;

/// Errors produced by the model, estimators and metrics.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid arguments: {0}")]
    InvalidArguments(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("estimation failure: {0}")]
    EstimationFailure(String),
    #[error("unsupported size: {0}")]
    UnsupportedSize(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArguments(alloc::format!($($arg)*))
    };
}

macro_rules! mismatch {
    ($($arg:tt)*) => {
        $crate::error::Error::DimensionMismatch(alloc::format!($($arg)*))
    };
}

pub(crate) use invalid;
pub(crate) use mismatch;
