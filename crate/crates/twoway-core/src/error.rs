//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Problem definition violates an invariant (domain, weight, data, ...).
    #[error("invalid problem spec: {0}")]
    InvalidSpec(String),

    /// Grid construction failed (no sign change, too few nodes, ...).
    #[error("grid error: {0}")]
    Grid(String),

    /// Eigensolve failed or produced fewer usable modes than requested.
    #[error("spectral error: {0}")]
    Spectral(String),

    /// A linear system that must be solved exactly is singular.
    #[error("singular system: {0}")]
    Singular(String),

    /// Least-squares system is rank deficient; carries the offending
    /// singular value.
    #[error("rank deficient system: smallest singular value {sigma_min:.3e}")]
    RankDeficient { sigma_min: f64 },

    /// Nonlinear fit did not converge; the message carries the best iterate.
    #[error("fit did not converge: {0}")]
    FitFailed(String),

    /// Operation requested outside its supported configuration.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Precondition violation on an operation argument.
    #[error("precondition violated: {0}")]
    Precondition(String),
}
