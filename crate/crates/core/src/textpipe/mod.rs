//! Text pipeline: reversible tokenization, BPE subwords, vocabularies,
//! pretrained-embedding import, and batch assembly.

pub mod batch;
pub mod bpe;
pub mod embeddings;
pub mod tokenizer;
pub mod vocab;

pub use batch::{make_batches, Batch, IdMat, PairIds};
pub use bpe::{learn_bpe, undo_bpe, BpeModel, CONTINUATION, END_OF_WORD};
pub use embeddings::{load_embeddings, write_embeddings};
pub use tokenizer::{detokenize, normalize_ws, tokenize, JOINER};
pub use vocab::{build_vocab, Vocab, BOS, EOS, NUM_SPECIALS, PAD, UNK};

/// Delimiter between a surface token and its factor annotations in factored
/// corpora ("word|case" style, using U+FFE8 to avoid natural text).
pub const FACTOR_SEP: char = '\u{FFE8}';

/// Split a possibly factor-annotated token into (surface, factor values).
pub fn split_factors(token: &str) -> (String, Vec<String>) {
    let mut parts = token.split(FACTOR_SEP);
    let surface = parts.next().unwrap_or("").to_string();
    (surface, parts.map(str::to_string).collect())
}

/// Attach factor annotations to a surface token.
pub fn join_factors(surface: &str, factors: &[String]) -> String {
    let mut out = surface.to_string();
    for f in factors {
        out.push(FACTOR_SEP);
        out.push_str(f);
    }
    out
}
