//! Error type shared by all modules of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input bytes are not valid text in the declared encoding.
    #[error("input is not valid UTF-8 at byte offset {offset}")]
    Decode { offset: usize },

    /// A token stream and a vocabulary were produced with different
    /// preprocessing rules, or a matrix was built from a different vocabulary.
    #[error("fingerprint mismatch: {context} (got {got:#018x}, expected {expected:#018x})")]
    FingerprintMismatch {
        context: &'static str,
        got: u64,
        expected: u64,
    },

    /// The input has no usable mass (e.g. an all-zero matrix).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A row or column margin is zero where a division by it is required.
    #[error("zero margin for {axis} {index}; drop empty rows/columns first")]
    ZeroMargin { axis: &'static str, index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Standard or principal coordinates were requested for a factorization
    /// that does not carry correspondence-analysis margins.
    #[error("{coords} coordinates require a centered (TTEST/POWER_CA) factorization")]
    UnsupportedCoordinates { coords: &'static str },

    /// Cosine similarity against an all-zero vector.
    #[error("similarity is undefined for a zero vector")]
    ZeroVector,

    /// Fewer data points than the operation can work with.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Correlation of a constant list has zero rank variance.
    #[error("correlation is undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("index {index} out of range (size {size})")]
    IndexOutOfRange { index: usize, size: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
