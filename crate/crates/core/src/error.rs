use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid shape: {rows}x{cols} does not match {len} entries")]
    InvalidShape {
        rows: usize,
        cols: usize,
        len: usize,
    },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("SVD did not converge after {sweeps} sweeps")]
    SvdNoConvergence { sweeps: usize },

    #[error("matrix is rank deficient (smallest/largest singular value = {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "iterates diverged (magnitude {magnitude:e}); curvature is not coercive for this gradient"
    )]
    Divergence { magnitude: f64 },

    #[error("{what} did not converge within {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("degenerate probe direction: perturbation vanished for direction {direction}, input {input}")]
    DegenerateDirection { direction: usize, input: usize },

    #[error("non-positive mean {value:e} at radius {radius:e} inside the fit window")]
    NonPositiveMean { radius: f64, value: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
