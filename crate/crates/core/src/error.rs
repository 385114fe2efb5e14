use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("derivative order {requested} exceeds the supported maximum {max}")]
    UnsupportedOrder { requested: usize, max: usize },
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point is not on the domain boundary: {0}")]
    NotOnBoundary(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("zero denominator in relative error")]
    ZeroDenominator,
    #[error("test grid of {requested} points exceeds the cap of {cap}")]
    GridCapExceeded { requested: usize, cap: usize },
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

pub type Result<T> = core::result::Result<T, Error>;
