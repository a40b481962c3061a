use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { what: String, min_eigenvalue: f64 },

    #[error("communication graph is disconnected")]
    Disconnected,

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("no convergence after {sweeps} sweeps (residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("unstable monodromy matrix (spectral radius {spectral_radius})")]
    UnstableMonodromy { spectral_radius: f64 },

    #[error("pair is not uniformly observable: {0}")]
    Unobservable(String),

    #[error("non-finite values produced: {0}")]
    NonFinite(String),

    #[error("series truncated at {terms} terms with defect {defect:e} above tolerance {tolerance:e}")]
    Truncation {
        terms: usize,
        defect: f64,
        tolerance: f64,
    },

    #[error("{diverged} of {trials} trials diverged (first: trial {first})")]
    Divergence {
        diverged: usize,
        trials: usize,
        first: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// Failures caused by the numbers rather than by the inputs' shape or files.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::Singular(_)
                | Error::NoConvergence { .. }
                | Error::UnstableMonodromy { .. }
                | Error::Unobservable(_)
                | Error::NonFinite(_)
                | Error::Truncation { .. }
                | Error::Divergence { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
