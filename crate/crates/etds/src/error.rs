//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by model construction, synthesis, simulation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("infeasible topology: {0}")]
    InfeasibleTopology(String),

    #[error("numerical fault: {0}")]
    NumericalFault(String),

    #[error("matrix is not Hurwitz: {0}")]
    NotStable(String),

    #[error("pair is not stabilizable: {0}")]
    NotStabilizable(String),

    #[error("iteration failed to converge: {0}")]
    ConvergenceFailure(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid sigma: {0}")]
    InvalidSigma(String),

    #[error("invalid attack window: {0}")]
    InvalidWindow(String),

    #[error("invalid step size: {0}")]
    InvalidStep(String),

    #[error("state diverged at t = {0}")]
    Diverged(f64),

    #[error("bound unavailable: {0}")]
    BoundUnavailable(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
