use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error(
        "degenerate susceptibility at omega = {omega:e} rad/s (|denominator| = {magnitude:e})"
    )]
    DegenerateSusceptibility { omega: f64, magnitude: f64 },

    #[error("quadrature did not converge: achieved relative error {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("closed loop has no steady state: {0}")]
    Unstable(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("grid coverage: {0}")]
    Coverage(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("integration unstable at t = {time:e} s (|Q| = {magnitude:e}); reduce dt")]
    Stability { time: f64, magnitude: f64 },

    #[error("insufficient statistics: {0}")]
    Statistics(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
