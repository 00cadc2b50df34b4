use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A configuration struct violates its own invariants.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Malformed or inconsistent QRAW capture data.
    #[error("capture format error: {0}")]
    Format(String),

    /// Calibration validity gate failed (saturation, poor linearity, ...).
    #[error("calibration error: {0}")]
    Calibration(String),

    /// Not enough samples/bits for the requested estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Security gate: no certifiable entropy or stale calibration.
    #[error("security gate: {0}")]
    SecurityGate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
