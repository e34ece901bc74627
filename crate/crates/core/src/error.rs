use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the data, model and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed price data: {0}")]
    Format(String),

    #[error("need at least {needed} clean rows, found {found}")]
    TooFewRows { needed: usize, found: usize },

    #[error("dates must be strictly increasing: {previous} is followed by {next}")]
    DatesNotIncreasing { previous: String, next: String },

    #[error("duplicate date {0}")]
    DuplicateDate(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("requested {requested} assets from a universe of {available}")]
    UniverseTooSmall { requested: usize, available: usize },

    #[error("covariance is singular or indefinite (min eigenvalue {min_eigenvalue:e}, max {max_eigenvalue:e})")]
    DegenerateCovariance {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("covariance condition number {condition:e} exceeds {limit:e}; pass a shrinkage intensity > 0")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("exhaustive search over n = {n} spins exceeds the cap of {cap}")]
    OracleCapExceeded { n: usize, cap: usize },

    #[error("relative risk undefined for ground-state risk {r_min} and estimated risk {r_est}")]
    UndefinedRelativeRisk { r_min: f64, r_est: f64 },

    #[error("power-law fit needs {0}")]
    Fit(String),
}

impl Error {
    /// Whether the failure is numerical (singular or ill-conditioned covariance).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateCovariance { .. } | Error::IllConditioned { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
