use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("infeasible parameters: constraint `{constraint}` violated ({detail})")]
    Parameter {
        constraint: &'static str,
        detail: String,
    },

    #[error("assembly failed: {0}")]
    Assembly(String),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("fixed-point iteration did not converge in {} iterations (last update {:e})", history.len(), history.last().copied().unwrap_or(f64::NAN))]
    NonConvergence { history: Vec<f64> },

    #[error("training diverged at epoch {epoch} (loss {loss:e})")]
    Diverged { epoch: usize, loss: f64, history: Vec<f64> },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("undefined reference norm: {0}")]
    UndefinedReference(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Assembly(_)
                | Error::Solver(_)
                | Error::NonConvergence { .. }
                | Error::Diverged { .. }
                | Error::UndefinedReference(_)
        )
    }
}
