//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or tree dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A numeric routine received or produced invalid values.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A model or run description is invalid.
    #[error("invalid spec: {0}")]
    Spec(String),
    /// Inputs violate a documented precondition.
    #[error("invalid input: {0}")]
    Input(String),
    /// A sampler produced a non-finite value at the given step.
    #[error("chain diverged at step {step}: {what}")]
    Diverged { step: u64, what: String },
    /// A binary file does not follow its declared layout.
    #[error("format error at byte {offset}: {what}")]
    Format { offset: u64, what: String },
    /// Checksum failure while reading a checkpoint.
    #[error("corrupt file: {0}")]
    Corrupt(String),
    /// Checkpoint written by a newer format revision.
    #[error("unsupported format version {0}")]
    Version(u32),
    /// The vectors spanning a subspace are (numerically) collinear.
    #[error("degenerate basis: {0}")]
    DegenerateBasis(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
