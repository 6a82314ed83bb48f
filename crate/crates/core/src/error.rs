use thiserror::Error;

pub type TextResult<T> = Result<T, TextError>;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: {what}")]
    Format { line: usize, what: String },

    #[error("embedding file dimension {file_dim} does not match requested {requested}")]
    EmbeddingDim { file_dim: usize, requested: usize },

    #[error("{what}")]
    Invalid { what: String },
}

pub type ModelResult<T> = Result<T, ModelError>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] minnmt_tensor::TensorError),

    #[error("bad model configuration: {what}")]
    Config { what: String },

    #[error("{what}")]
    Invalid { what: String },
}

pub type FormatResult<T> = Result<T, FormatError>;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("unsupported format version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },

    #[error("corrupt file: {what}")]
    Corrupt { what: String },

    #[error("bad model configuration: {what}")]
    Config { what: String },
}

pub type EvalResult<T> = Result<T, EvalError>;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("candidate/reference count mismatch: {candidates} vs {references}")]
    LengthMismatch { candidates: usize, references: usize },

    #[error("{what}")]
    Invalid { what: String },
}
