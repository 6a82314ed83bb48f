//! Desk-scale neural machine translation: reversible tokenization and BPE,
//! an attention-based encoder-decoder over the shared engine abstraction,
//! beam-search translation with a forward-only deployment path, corpus
//! evaluation, and the versioned model/dataset file formats.

pub mod error;
pub mod eval;
pub mod format;
pub mod model;
pub mod textpipe;
pub mod toy;
pub mod translate;

pub use error::{EvalError, FormatError, ModelError, TextError};
