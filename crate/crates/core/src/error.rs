use thiserror::Error;

/// Errors raised by the key-fusing library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("key space mismatch: {left}-bit vs {right}-bit")]
    SpaceMismatch { left: u32, right: u32 },

    #[error("key value {value} out of range for a {bits}-bit key space")]
    OutOfRange { value: u64, bits: u32 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{op} supports at most {max} bits, got {bits}")]
    Capacity {
        op: &'static str,
        max: u32,
        bits: u32,
    },

    #[error("key queue underflow: need {needed} keys, {available} available")]
    Underflow { needed: usize, available: usize },

    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, Error>;
