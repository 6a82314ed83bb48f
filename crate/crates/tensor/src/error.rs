use thiserror::Error;

pub type TensorResult<T> = Result<T, TensorError>;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape error: {what}")]
    BadShape { what: String },

    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    DimMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("softmax over a fully masked row {row}")]
    AllMasked { row: usize },

    #[error("{what}")]
    Invalid { what: String },
}
