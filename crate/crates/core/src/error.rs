use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncation { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("power iteration did not converge for component {component} after {iterations} iterations (residual {residual:e})")]
    Convergence {
        component: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("degenerate range: global max equals global min ({0})")]
    DegenerateRange(f64),

    #[error("stale state: {0}")]
    State(String),

    #[error("labeling strategy violation: {0}")]
    Strategy(String),

    #[error("non-finite values at iteration {iteration}: {detail}")]
    Numerics { iteration: u64, detail: String },

    #[error("metrics undefined: no evaluated pixels")]
    UndefinedMetrics,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
