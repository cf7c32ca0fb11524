//! Crate-wide error type with a coarse classification used by the CLI to pick
//! exit codes (invalid inputs vs. failures of the numerics themselves).

use thiserror::Error;

/// Coarse failure class, mapped to distinct process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad inputs: malformed config, violated preconditions, impossible requests.
    Validation,
    /// The computation itself failed: non-convergence, NaN, unusable windows.
    Numerical,
    /// Filesystem trouble while reading or writing artifacts.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("eigensolver failed to converge for eigenvalue index {index} (residual {residual:.3e})")]
    NonConvergence { index: usize, residual: f64 },

    #[error("dense 2D solve refused: {points} grid points exceeds cap {cap}")]
    SizeCapExceeded { points: usize, cap: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("energy {energy} outside covered window [{lo}, {hi}]")]
    EnergyOutOfRange { energy: f64, lo: f64, hi: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("calibration failed: {0}")]
    CalibrationFailed(String),

    #[error("truncation too small: {0}")]
    TruncationTooSmall(String),

    #[error("propagation aborted at step {step}: {reason}")]
    PropagationAborted { step: usize, reason: String },

    #[error("scenario stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wrap an error with the scenario stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidGrid(_)
            | Error::GridTooSmall(_)
            | Error::SizeCapExceeded { .. }
            | Error::GridMismatch(_)
            | Error::InvalidConfig(_)
            | Error::TruncationTooSmall(_) => ErrorClass::Validation,
            Error::NonConvergence { .. }
            | Error::EnergyOutOfRange { .. }
            | Error::CalibrationFailed(_)
            | Error::PropagationAborted { .. } => ErrorClass::Numerical,
            Error::Stage { source, .. } => source.class(),
            Error::Io(_) => ErrorClass::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
