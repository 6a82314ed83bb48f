//! Corpus perplexity via teacher-forced scoring.

use crate::error::{ModelError, ModelResult};
use crate::model::ForwardBackend;
use crate::translate::score_pair;

/// exp(total NLL / total target tokens) over aligned id pairs; target
/// tokens count content plus the final EOS per sentence.
pub fn corpus_perplexity<B: ForwardBackend>(
    backend: &B,
    pairs: &[(Vec<u32>, Vec<u32>)],
) -> ModelResult<f64> {
    if pairs.is_empty() {
        return Err(ModelError::Invalid { what: "perplexity of an empty corpus".into() });
    }
    let mut total_nll = 0.0;
    let mut total_tokens = 0usize;
    for (src, tgt) in pairs {
        let (logprob, _) = score_pair(backend, src, tgt, &[], &[])?;
        total_nll -= logprob;
        total_tokens += tgt.len() + 1;
    }
    Ok((total_nll / total_tokens as f64).exp())
}
