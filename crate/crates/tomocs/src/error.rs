//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used by every fallible operation in the crate.
pub type Result<T> = std::result::Result<T, TomocsError>;

/// Errors produced by the tomography pipeline.
#[derive(Debug, Error)]
pub enum TomocsError {
    /// Dimension outside the supported 1–3 qubit range.
    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    /// Two objects that must share a dimension do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Operands are expressed in different operator bases.
    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    /// A gate matrix failed its unitarity check, or an unknown gate name.
    #[error("invalid gate: {0}")]
    InvalidGate(String),

    /// A process matrix violates physicality beyond the stated tolerance.
    #[error("nonphysical process matrix: {0}")]
    Nonphysical(String),

    /// A parameter is out of its documented range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A file exists but its contents do not parse as the expected format.
    #[error("malformed file: {0}")]
    Format(String),

    /// A dense linear-algebra kernel (eigendecomposition, factorization)
    /// failed to converge or returned an unusable result.
    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
