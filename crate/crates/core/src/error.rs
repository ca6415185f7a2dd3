use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (max |A - A^H| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("trace is not 1 (got {0})")]
    NotUnitTrace(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension {dim} exceeds the configured maximum {max}")]
    DimensionOverflow { dim: usize, max: usize },

    #[error("eigensolver did not converge")]
    DecompositionFailure,

    #[error("state is not pure (purity {0})")]
    NotPure(f64),

    #[error("Krylov order {order} exceeds the termination order (Gram pivot {pivot:e})")]
    OrderExceedsNStar { order: usize, pivot: f64 },

    #[error("quantum Fisher information {0:e} is too small for a relative gap")]
    ZeroQfi(f64),

    #[error("need at least {needed} batches, have {available}")]
    InsufficientBatches { needed: usize, available: usize },

    #[error("batch {0} is empty")]
    EmptyBatch(usize),

    #[error("estimated Gram matrix is singular at order {order}")]
    SingularEstimate { order: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DecompositionFailure
                | Error::OrderExceedsNStar { .. }
                | Error::ZeroQfi(_)
                | Error::SingularEstimate { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
