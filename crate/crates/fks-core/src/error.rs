//! Error type shared by all modules.

use thiserror::Error;

/// Crate-wide error enumeration.
///
/// Rejected *inputs* are reported as [`FksError::InvalidParam`]; numerical
/// failures carry enough context to act on (achieved error estimates,
/// offending iteration indices).
#[derive(Debug, Error)]
pub enum FksError {
    /// A precondition on user-supplied values failed.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Two fields (or a field and an operator) disagree about the grid.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Adaptive quadrature stopped above its tolerance.
    #[error("quadrature non-convergence: achieved error estimate {achieved:.3e} exceeds tolerance {tol:.3e}")]
    QuadratureNonConvergence { achieved: f64, tol: f64 },

    /// The periodic box is too small for the requested kernel/time: the
    /// boundary amplitude contaminates the quantity being measured.
    #[error("grid too small: relative boundary tail {rel_tail:.3e} exceeds tolerance {tol:.3e}")]
    GridTooSmall { rel_tail: f64, tol: f64 },

    /// A time stepper or fixed-point iteration failed irrecoverably.
    #[error("solver failure: {0}")]
    SolverFailure(String),

    /// I/O failure while reading or writing artifacts.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed persisted data (snapshot header, CSV record, ...).
    #[error("format error: {0}")]
    Format(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, FksError>;
