use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("sinkhorn potentials became non-finite (epsilon {epsilon} too small for cost range)")]
    UnderRegularized { epsilon: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical invariant violated: {0}")]
    InvariantViolated(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed data: {0}")]
    Malformed(String),
}

impl Error {
    /// Failures caused by numerics rather than by inputs or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::UnderRegularized { .. } | Error::InvariantViolated(_)
        )
    }
}
