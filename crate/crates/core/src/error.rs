use std::path::PathBuf;
use thiserror::Error;

/// Errors raised by model construction, analysis and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: String,
        found: String,
    },

    #[error("singular solve at s = {re:e}{im:+e}j (pivot {pivot_index}, |pivot| = {magnitude:e})")]
    SingularSolve {
        re: f64,
        im: f64,
        pivot_index: usize,
        magnitude: f64,
    },

    #[error("unstable system: eigenvalue {re:e}{im:+e}j has non-negative real part (margin {margin:e})")]
    Unstable { re: f64, im: f64, margin: f64 },

    #[error("eigenvalue computation failed: {0}")]
    EigenFailure(String),

    #[error("reduction failed: {0}")]
    Reduction(String),

    #[error("shift search failed: {0}")]
    ShiftSearch(String),

    #[error("quadrature oracle failed: {0}")]
    Quadrature(String),

    #[error("input signal has infinite energy: {0}")]
    InfiniteEnergy(String),

    #[error("incomparable sources: {0}")]
    IncomparableSources(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{context}: {message}")]
    Document { context: String, message: String },

    #[error("simulation step failed: {0}")]
    Simulation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn doc(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Document {
            context: context.into(),
            message: message.into(),
        }
    }
}
