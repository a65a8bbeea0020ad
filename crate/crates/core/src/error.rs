use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Bad magic, unknown dtype code, non-UTF-8 names and similar container problems.
    #[error("tensor file format error: {0}")]
    Format(String),

    #[error("tensor file truncated while reading {0}")]
    Truncated(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Parameter outside the mathematical domain of an operation (alpha <= 1/2, nu not in (0,1), ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("matrix is not positive semidefinite: min eigenvalue {min_eig:e} (max {max_eig:e})")]
    NotPsd { min_eig: f64, max_eig: f64 },

    #[error("decay fit needs at least 3 positive values, got {0}")]
    Fit(usize),

    #[error("node selection failed at layer {layer} after {attempts} attempts (best slack {best_slack:e})")]
    Selection {
        layer: usize,
        attempts: usize,
        best_slack: f64,
    },

    #[error("bisection bracket failure: {0}")]
    Bracket(String),

    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
