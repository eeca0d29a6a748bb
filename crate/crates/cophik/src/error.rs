use thiserror::Error;

/// Errors produced by the regression toolkit.
#[derive(Debug, Error)]
pub enum CophikError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "factorization failed for all nugget candidates up to cap {cap:.3e}; \
         matrix is badly scaled or indefinite"
    )]
    NuggetExhausted { cap: f64 },

    #[error("ensemble needs at least 2 members, got {0}")]
    EnsembleTooSmall(usize),

    #[error("observation at {coords:?} is {distance:.3e} away from the nearest grid node")]
    ObservationOffGrid { coords: Vec<f64>, distance: f64 },

    #[error("grids do not match: {0}")]
    GridMismatch(String),

    #[error("degenerate system: {0}")]
    Degenerate(String),

    #[error("optimization failed: {0}")]
    OptimizationFailed(String),

    #[error("no candidates left: {0}")]
    NoCandidates(String),
}

pub type Result<T> = std::result::Result<T, CophikError>;
