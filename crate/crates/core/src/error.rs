use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid step distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid cone: {0}")]
    InvalidCone(String),

    #[error("point {0:?} is not strictly inside the cone")]
    OutsideCone(Vec<i64>),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("kernel needs {required} bytes, above the memory cap of {cap} bytes")]
    MemoryCap { required: u64, cap: u64 },

    #[error("degenerate tilt: {0}")]
    DegenerateTilt(String),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("not enough usable rows: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
