use thiserror::Error;

/// Errors raised by the inference engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {context} at component {index}")]
    NonFinite { context: &'static str, index: usize },

    #[error("point {point:?} lies outside the domain of {context}")]
    Domain { context: &'static str, point: Vec<f64> },

    #[error("root bracketing failed for eigenmode {mode}")]
    Convergence { mode: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{method} diverged after {steps} steps (last objective {last:?})")]
    Divergence {
        method: &'static str,
        steps: usize,
        last: Vec<f64>,
    },

    #[error("matrix factorization failed even with jitter {jitter:e}")]
    Factorization { jitter: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by the caller's configuration rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Argument(_) | Error::Dimension { .. } | Error::Domain { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Returns the index of the first non-finite entry, if any.
pub(crate) fn first_non_finite(values: &[f64]) -> Option<usize> {
    values.iter().position(|v| !v.is_finite())
}

pub(crate) fn check_finite(values: &[f64], context: &'static str) -> Result<()> {
    match first_non_finite(values) {
        Some(index) => Err(Error::NonFinite { context, index }),
        None => Ok(()),
    }
}
