use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("categorical weights have zero total mass")]
    ZeroMass,

    #[error("sample count must be at least 1")]
    ZeroSamples,

    #[error("negative component {value} at index {index} in a non-negative encoding")]
    NegativeComponent { index: usize, value: f64 },

    #[error("requested {requested} coordinates from a vector of dimension {dim}")]
    TooManyCoordinates { requested: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported float width {0} (expected 32 or 64)")]
    FloatBits(u32),

    #[error("malformed wire message: {0}")]
    Wire(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("schedule violates {} condition(s): {}", .0.len(), .0.join("; "))]
    InvalidSchedule(Vec<String>),

    #[error("graph is not connected")]
    Disconnected,

    #[error("density vanishes at a sampled point")]
    ZeroDensity,

    #[error("numerical failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
