//! Corpus-level evaluation: BLEU and perplexity.

pub mod bleu;
pub mod ppl;

pub use bleu::{bleu, BleuReport};
pub use ppl::corpus_perplexity;
