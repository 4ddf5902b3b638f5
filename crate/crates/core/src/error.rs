//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape or size of an argument does not match what the operation needs.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A matrix required to be symmetric positive semidefinite is not.
    #[error("matrix is not positive semidefinite: {0}")]
    NotPsd(String),

    /// Invalid argument value (empty data, non-finite entries, bad config).
    #[error("invalid argument: {0}")]
    Invalid(String),

    /// A statistic or operation is undefined for the given sizes
    /// (e.g. nonpositive degrees of freedom).
    #[error("undefined for these sizes: {0}")]
    Undefined(String),

    /// A required quantity is numerically degenerate (zero baseline norm,
    /// singular normal equations beyond repair, tied singular values where a
    /// unique direction is required).
    #[error("degenerate problem: {0}")]
    Degenerate(String),

    /// Constrained attack synthesis found no feasible point.
    #[error("no feasible attack found: worst constraint violation {worst_violation:.3e}")]
    Infeasible {
        /// Constraint values g_i at the least-violating iterate seen.
        constraint_values: Vec<f64>,
        /// max_i (g_i - delta_i) at that iterate.
        worst_violation: f64,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

/// Returns an error if any entry of `m` is NaN or infinite.
pub(crate) fn ensure_finite(name: &str, m: &crate::Matrix) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} contains non-finite entries")))
    }
}
