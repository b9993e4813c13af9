use std::path::PathBuf;

use crate::portfolio::NumericSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report. [`Error::category`] gives the
/// stable machine-readable tag printed by the command-line front end.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("insufficient-history: {0}")]
    InsufficientHistory(String),
    #[error("singular-covariance: {0}")]
    SingularCovariance(String),
    #[error("dimension-mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid-input: {0}")]
    InvalidInput(String),
    #[error("no-convergence: objective still moving after {} iterations", .0.iterations)]
    NoConvergence(Box<NumericSolution>),
    #[error("invalid-config: {0}")]
    InvalidConfig(String),
    #[error("invalid-allocation: {0}")]
    InvalidAllocation(String),
    #[error("unknown-client: {0}")]
    UnknownClient(usize),
    #[error("warmup-too-long: warmup {warmup} must be shorter than {rounds} rounds")]
    WarmupTooLong { warmup: usize, rounds: usize },
    #[error("duplicate-seed: {0}")]
    DuplicateSeed(u64),
    #[error("round {round}: {source}")]
    InRound {
        round: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("parse-error: {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("io-error: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::InsufficientHistory(_) => "insufficient-history",
            Error::SingularCovariance(_) => "singular-covariance",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::InvalidInput(_) => "invalid-input",
            Error::NoConvergence(_) => "no-convergence",
            Error::InvalidConfig(_) => "invalid-config",
            Error::InvalidAllocation(_) => "invalid-allocation",
            Error::UnknownClient(_) => "unknown-client",
            Error::WarmupTooLong { .. } => "warmup-too-long",
            Error::DuplicateSeed(_) => "duplicate-seed",
            Error::InRound { source, .. } => source.category(),
            Error::Parse { .. } => "parse-error",
            Error::Io { .. } => "io-error",
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::WarmupTooLong { .. }
                | Error::DuplicateSeed(_)
                | Error::Parse { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_round(round: usize, source: Error) -> Self {
        Error::InRound {
            round,
            source: Box::new(source),
        }
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
