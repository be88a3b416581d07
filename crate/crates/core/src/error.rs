use thiserror::Error;

/// Errors raised by the quantile Granger-causality library.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("quantile level {0} outside the open interval (0, 1)")]
    TauOutOfRange(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is singular or not positive definite (pivot {pivot} at index {index})")]
    Singular { index: usize, pivot: f64 },

    #[error("solver did not converge after {iterations} iterations (duality gap {gap:.3e})")]
    NoConvergence { iterations: usize, gap: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("subsample window too small: {observations} observations for {columns} columns")]
    WindowTooSmall {
        observations: usize,
        columns: usize,
    },

    #[error("rescaling is only defined for a single tested coefficient (p = 1), got p = {0}")]
    UnsupportedRescaling(usize),

    #[error("{failures} of {total} bootstrap replications failed to fit")]
    BootstrapFailures { failures: usize, total: usize },

    #[error("critical value table is invalid: {0}")]
    BadTable(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
