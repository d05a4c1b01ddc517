use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Why a single working-model fit or Wald statistic could not be produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FitFailure {
    #[error("design matrix is rank deficient")]
    SingularDesign,
    #[error("Newton iteration did not converge")]
    NotConverged,
    #[error("complete or quasi-complete separation")]
    Separation,
    #[error("estimated variance of the tested coefficient is degenerate")]
    DegenerateVariance,
}

impl FitFailure {
    pub fn code(self) -> &'static str {
        match self {
            FitFailure::SingularDesign => "SINGULAR_DESIGN",
            FitFailure::NotConverged => "NOT_CONVERGED",
            FitFailure::Separation => "SEPARATION",
            FitFailure::DegenerateVariance => "DEGENERATE_VARIANCE",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Fit(#[from] FitFailure),
    #[error("every stage-1 marginal fit failed")]
    AllFitsFailed,
    #[error("parse error at line {line}{}: {message}", col.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        line: usize,
        col: Option<usize>,
        message: String,
    },
    #[error("input {0} contains no data")]
    EmptyInput(PathBuf),
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code printed by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "DOMAIN_ERROR",
            Error::Input(_) => "INPUT_ERROR",
            Error::Fit(f) => f.code(),
            Error::AllFitsFailed => "ALL_FITS_FAILED",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::EmptyInput(_) => "EMPTY_INPUT",
            Error::FileNotFound(_) => "FILE_NOT_FOUND",
            Error::Config(_) => "CONFIG_ERROR",
            Error::Io(_) => "IO_ERROR",
            Error::Json(_) => "JSON_ERROR",
        }
    }
}
