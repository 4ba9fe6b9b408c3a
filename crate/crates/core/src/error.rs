use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("polynomial degree {degree} exceeds the supported maximum {max}")]
    DegreeTooLarge { degree: usize, max: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("no signal: {0}")]
    NoSignal(String),

    #[error("mixture density vanishes at data point {index} (x = {x})")]
    ZeroDensity { index: usize, x: f64 },

    #[error(
        "least-squares fit did not converge after {iterations} iterations \
         (projected-gradient norm {gradient_norm:.3e}, residual {residual:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
        residual: f64,
    },

    #[error("bootstrap replica {replica} failed: {source}")]
    Replica {
        replica: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
