use thiserror::Error;

/// Library-wide error type.
///
/// `Budget` is kept distinct from the other variants because callers (the CLI
/// in particular) map it to a dedicated exit code: an exceeded enumeration or
/// iteration budget is an instruction to shrink the problem, not a defect in
/// the inputs.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed argument: out-of-range site, zero-length axis, bad direction.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A structural rule was violated while building a model, move, or spec
    /// (e.g. a rate clause touching one of the exchange endpoints).
    #[error("construction rejected: {0}")]
    Construction(String),

    /// A validation run produced a definite negative verdict with a witness.
    #[error("validation failed: {0}")]
    Validation(String),

    /// Exhaustive enumeration or iteration limits were exceeded.
    #[error("budget exceeded: {0}")]
    Budget(String),

    /// Numerical routine failed to converge or produced unusable output.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// File contents did not parse or failed schema checks.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
