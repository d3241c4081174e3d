use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// A Kronecker sum (or other matrix required to be positive definite) failed
    /// the eigenvalue-pair floor.
    #[error("not positive definite: smallest pair sum {min_pair_sum:.3e} vs floor {floor:.3e}")]
    NotPositiveDefinite { min_pair_sum: f64, floor: f64 },

    #[error("numerical rank deficiency: {0}")]
    RankDeficient(String),

    /// Input violates a preprocessing requirement (e.g. an all-zero row);
    /// the caller should filter the data first.
    #[error("preprocessing error: {0}")]
    Preprocessing(String),

    #[error(
        "{solver} did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})"
    )]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        grad_norm: f64,
        /// Last iterate, flattened, for diagnostics.
        last_iterate: Vec<f64>,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("EM iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: msg.into(),
        }
    }

    /// Strips [`Error::Iteration`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Iteration { source, .. } => source.root(),
            other => other,
        }
    }
}
