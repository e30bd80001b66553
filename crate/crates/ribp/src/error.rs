use thiserror::Error;

/// Errors produced by model construction, sampling, and inference.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside its documented domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A row sum has zero probability under the current Bernoulli profile.
    #[error("row sum {s} is infeasible under the current profile")]
    InfeasibleSum { s: usize },

    /// A computation produced a non-finite value where one is required.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An enumeration was requested beyond the supported size cap.
    #[error("enumeration over N*K = {actual} entries exceeds the cap of {cap}")]
    EnumerationTooLarge { actual: usize, cap: usize },

    /// A sampler invariant was violated (both Gibbs branch weights zero, etc.).
    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("estimation failure: {0}")]
    EstimationFailure(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
