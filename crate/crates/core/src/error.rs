//! Error type shared by every estimator.

use thiserror::Error;

/// Failure raised by any routine in the crate.
#[derive(Debug, Error)]
pub enum RateError {
    /// Bad or inconsistent parameters supplied by the caller.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A linear solve or factorization broke down.
    #[error("numerical failure in {context}: {detail}")]
    Numerical { context: String, detail: String },

    #[error("{context} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        context: String,
        iterations: usize,
        residual: f64,
    },

    /// A walker or trajectory produced a non-finite position.
    #[error("propagation failed at {position}: {detail}")]
    Propagation { position: String, detail: String },

    /// Chain is not irreducible; carries the strongly connected components found.
    #[error("chain is reducible ({} components): {detail}", components.len())]
    Reducible {
        detail: String,
        components: Vec<Vec<usize>>,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RateError {
    pub(crate) fn numerical(context: impl Into<String>, detail: impl Into<String>) -> Self {
        RateError::Numerical {
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        RateError::InvalidInput(msg.into())
    }

    /// Coarse classification used by front ends to pick an exit status.
    pub fn category(&self) -> ErrorCategory {
        match self {
            RateError::InvalidInput(_) | RateError::Parse(_) => ErrorCategory::Input,
            RateError::InsufficientData(_) => ErrorCategory::InsufficientData,
            RateError::Io(_) | RateError::Resource(_) => ErrorCategory::Environment,
            RateError::Numerical { .. }
            | RateError::NoConvergence { .. }
            | RateError::Propagation { .. }
            | RateError::Reducible { .. } => ErrorCategory::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Input,
    Numerical,
    InsufficientData,
    Environment,
}

pub type Result<T> = std::result::Result<T, RateError>;
