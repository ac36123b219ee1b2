use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("exp overflow at ({row}, {col}): exponent {exponent}")]
    ExpOverflow {
        row: usize,
        col: usize,
        exponent: f64,
    },

    #[error("normalizer for row {row} is {value}, expected a positive value")]
    NonPositiveNormalizer { row: usize, value: f64 },

    #[error("{rows}x{cols} matrix exceeds the materialization guard of {limit} entries")]
    SizeGuard {
        rows: usize,
        cols: usize,
        limit: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("row {row} has no probability mass")]
    ZeroRow { row: usize },

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn mismatch(op: &'static str, detail: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            op,
            detail: detail.into(),
        }
    }
}
