use thiserror::Error;

/// Every failure the library can report, grouped by how a caller should react.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("invalid case: {0}")]
    InvalidCase(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("value {value} lies outside the cost domain (|d| < {bound})")]
    Domain { value: f64, bound: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("infeasible problem: {0}")]
    Infeasible(String),
    #[error("root solve failed at bus index {bus}: {reason}")]
    RootSolve { bus: usize, reason: String },
    #[error("linear solve failed: {0}")]
    Singular(String),
    #[error("integration diverged at t = {t}: {reason}")]
    Divergence { t: f64, reason: String },
    #[error("solver did not converge: {0}")]
    NoConvergence(String),
}

/// Coarse classification used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. }
            | Error::Json(_)
            | Error::Csv(_)
            | Error::InvalidCase(_)
            | Error::InvalidScenario(_)
            | Error::Dimension { .. }
            | Error::Infeasible(_) => ErrorClass::Input,
            Error::Domain { .. }
            | Error::RootSolve { .. }
            | Error::Singular(_)
            | Error::Divergence { .. }
            | Error::NoConvergence(_) => ErrorClass::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn read_file(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}
