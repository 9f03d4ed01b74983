use std::io;

use thiserror::Error;

/// Errors raised by the filters, the benchmark systems and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Cholesky factorization failed even after the maximum diagonal jitter.
    #[error("matrix is not positive definite (after {attempts} jitter attempts)")]
    NotPositiveDefinite { attempts: u32 },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("sequence lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    /// n + lambda must be strictly positive for the sigma-point square root.
    #[error("invalid unscented scaling: n + lambda = {0}")]
    InvalidScaling(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The fixed-point iteration hit its cap while still taking large steps.
    #[error("fixed-point iteration diverged after {iterations} iterations (last relative step {last_step:e})")]
    Diverged { iterations: usize, last_step: f64 },

    #[error("non-finite state produced by {0}")]
    NonFiniteState(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
