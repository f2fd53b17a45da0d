use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid market spec: {0}")]
    Validation(String),

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semi-definite (eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("matrix is not positive definite (pivot {0:.3e})")]
    NotPositiveDefinite(f64),

    #[error("quadratic coefficient positivity violated for asset {asset}: D+ = {value:.6e}")]
    Positivity { asset: usize, value: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("inventory {0:?} is not on the lattice")]
    OffLattice(Vec<f64>),

    #[error("inventory {0:?} is outside the risk limits")]
    InventoryOutOfBounds(Vec<f64>),

    #[error("state count {count} exceeds cap {cap}")]
    TooManyStates { count: usize, cap: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed spec JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by an invalid market specification.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::NotSymmetric(_)
                | Error::NotPsd(_)
                | Error::NotPositiveDefinite(_)
                | Error::Json(_)
        )
    }

    /// True for filesystem / output errors.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Csv(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
