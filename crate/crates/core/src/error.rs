use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value at position {index} in {what}")]
    NonFinite { what: &'static str, index: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("SVD did not converge after {sweeps} sweeps on a {rows}x{cols} matrix")]
    NoConvergence {
        rows: usize,
        cols: usize,
        sweeps: usize,
    },

    #[error("inconsistent constraint subsystem: residual {residual:.3e} exceeds {bound:.3e}")]
    InconsistentSubsystem { residual: f64, bound: f64 },

    #[error("invalid index set: {0}")]
    InvalidIndices(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("sample space is not enumerable")]
    NotEnumerable,

    #[error("undefined quantity: {0}")]
    Undefined(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_mismatch(op: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::DimensionMismatch {
        op,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
