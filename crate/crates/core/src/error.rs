//! Error type shared by every module of the library.

use thiserror::Error;

/// Library-wide error.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A matrix expected to be Hermitian is not (max |A − A†| given).
    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),
    /// A deviation density matrix carries a nonzero trace.
    #[error("deviation density matrix is not traceless (trace {0:.3e})")]
    NotTraceless(f64),
    /// A physical or numerical parameter is out of its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    /// Times must be non-negative.
    #[error("negative time {0}")]
    NegativeTime(f64),
    /// A fit could not be performed or did not converge.
    #[error("fit failed: {0}")]
    Fit(String),
    /// Malformed textual input (program, CSV, config).
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// Malformed structured (JSON) input.
    #[error("invalid JSON: {0}")]
    Json(String),
    /// Time series with mismatching grids were combined.
    #[error("time grids differ: {0}")]
    GridMismatch(String),
    /// The secular approximation cannot classify a term.
    #[error("term with frequency {frequency:.3e} rad/s is neither secular nor quickly oscillating (rate scale {rate:.3e} 1/s)")]
    AmbiguousSecular { frequency: f64, rate: f64 },
    /// A stochastic trajectory failed the per-step unitarity check.
    #[error("trajectory {member} diverged: norm drift {drift:.3e} at step {step}")]
    Diverged { member: u64, step: usize, drift: f64 },
    /// Repeated preparations of a tomography source disagree.
    #[error("inconsistent repeated preparations (max deviation {0:.3e})")]
    InconsistentSource(f64),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name: name.to_string(), reason: reason.into() }
    }
}

/// Library result alias.
pub type Result<T> = std::result::Result<T, Error>;
