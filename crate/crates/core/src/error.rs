use std::path::PathBuf;

use num_complex::Complex64;

/// Errors produced anywhere in the identification and feedback pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("truncation M = {truncation} is below the coefficient support {support}")]
    TruncationTooSmall { truncation: usize, support: usize },

    #[error("operator is singular at omega = {omega:e} rad/s")]
    Singular { omega: f64 },

    #[error("evaluation at omega = {omega:e} rad/s hits pole {pole}")]
    PoleHit { omega: f64, pole: Complex64 },

    #[error("least-squares system is rank deficient ({context}); try a lower model order")]
    SingularFit { context: String },

    #[error("I + D*K is singular for K = {gain:e} (algebraic loop)")]
    AlgebraicLoop { gain: f64 },

    #[error(
        "{topology} feedback needs an {expected} HTF but the data is {found}; a parallel resistor \
         closes the loop around a node impedance, a series resistor around a branch admittance"
    )]
    TopologyMismatch {
        topology: &'static str,
        expected: &'static str,
        found: &'static str,
    },

    #[error("realization order {order} exceeds the cap of {cap} states; reduce n or the model order")]
    RealizationTooLarge { order: usize, cap: usize },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("integration did not converge after {steps} steps per period (last change {change:e})")]
    Integration { steps: usize, change: f64 },

    #[error("bisection failed: {0}")]
    Bisection(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
