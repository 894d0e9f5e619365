use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("matrix is singular: non-positive diagonal entry {value} at row {row}")]
    Singular { row: usize, value: f64 },

    #[error("matrix is not positive definite (pivot {row} = {value})")]
    NotPositiveDefinite { row: usize, value: f64 },

    #[error("backward called before forward")]
    BackwardBeforeForward,

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("unreachable point ({x}, {y}) at index {index}: distance {distance} outside [{min}, {max}]")]
    Unreachable {
        index: usize,
        x: f64,
        y: f64,
        distance: f64,
        min: f64,
        max: f64,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
