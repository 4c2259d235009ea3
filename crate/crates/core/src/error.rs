use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("point {point:?} lies outside the chart domain ({reason})")]
    Domain { point: Vec<f64>, reason: String },

    #[error("geodesic leaves the chart domain at parameter t = {parameter}")]
    DomainExit { parameter: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("non-finite drift value at b = {b:?}, x = {x:?}")]
    Evaluation {
        b: Vec<f64>,
        x: Vec<f64>,
        z: Vec<f64>,
    },

    #[error("property violated: {what} (witness {witness:?})")]
    PropertyViolation { what: String, witness: Vec<f64> },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("regression system is singular at time index {step}")]
    Basis { step: usize },

    #[error("non-finite coefficient at simulation step {step}")]
    Simulation { step: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}
