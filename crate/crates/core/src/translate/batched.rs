//! Batched translation: sentences are bucketed by length, each bucket is
//! encoded once, and all of a bucket's beams decode together. Outputs are
//! independent of the batch size, bit for bit.

use std::time::Instant;

use super::beam::{beam_decode_group, BeamConfig, ScoredHypothesis};
use crate::error::{ModelError, ModelResult};
use crate::model::ForwardBackend;
use crate::textpipe::{IdMat, EOS, PAD};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputStats {
    pub source_tokens: usize,
    pub sentences: usize,
    pub seconds: f64,
    pub tokens_per_sec: f64,
}

/// Translate sentences (ids, with optional per-factor id sequences), in
/// input order. Empty sentences pass through as empty translations.
pub fn translate_batch<B: ForwardBackend>(
    backend: &B,
    sentences: &[Vec<u32>],
    sentence_factors: &[Vec<Vec<u32>>],
    beam: &BeamConfig,
    batch_size: usize,
) -> ModelResult<(Vec<Vec<ScoredHypothesis>>, ThroughputStats)> {
    if batch_size == 0 {
        return Err(ModelError::Invalid { what: "batch size must be at least 1".into() });
    }
    let n_factors = backend.config().factors.len();
    if !sentence_factors.is_empty() && sentence_factors.len() != sentences.len() {
        return Err(ModelError::Invalid {
            what: "factor annotations must cover every sentence".into(),
        });
    }
    let start = Instant::now();

    let empty_result = || {
        vec![ScoredHypothesis {
            tokens: vec![EOS],
            factor_tokens: vec![Vec::new(); n_factors],
            score: 0.0,
        }]
    };

    let mut results: Vec<Option<Vec<ScoredHypothesis>>> = vec![None; sentences.len()];
    let mut order: Vec<usize> = (0..sentences.len()).filter(|&i| !sentences[i].is_empty()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(sentences[i].len()));

    for chunk in order.chunks(batch_size) {
        let rows = chunk.len();
        let s_max = chunk.iter().map(|&i| sentences[i].len()).max().unwrap();
        let mut src = IdMat::filled(rows, s_max, PAD);
        let mut factor_mats = vec![IdMat::filled(rows, s_max, PAD); n_factors];
        let mut lens = Vec::with_capacity(rows);
        for (r, &i) in chunk.iter().enumerate() {
            for (c, &id) in sentences[i].iter().enumerate() {
                src.set(r, c, id);
            }
            for j in 0..n_factors {
                let seq = sentence_factors
                    .get(i)
                    .and_then(|f| f.get(j))
                    .ok_or_else(|| ModelError::Invalid {
                        what: format!("sentence {i} is missing factor {j} annotations"),
                    })?;
                if seq.len() != sentences[i].len() {
                    return Err(ModelError::Invalid {
                        what: format!("sentence {i}: factor {j} length mismatch"),
                    });
                }
                for (c, &id) in seq.iter().enumerate() {
                    factor_mats[j].set(r, c, id);
                }
            }
            lens.push(sentences[i].len());
        }
        let enc = backend.encode(&src, &lens, &factor_mats)?;
        let decoded = beam_decode_group(backend, &enc, beam)?;
        for (&i, hyps) in chunk.iter().zip(decoded) {
            results[i] = Some(hyps);
        }
    }

    let out: Vec<Vec<ScoredHypothesis>> = results
        .into_iter()
        .map(|r| r.unwrap_or_else(empty_result))
        .collect();

    let seconds = start.elapsed().as_secs_f64();
    let source_tokens: usize = sentences.iter().map(Vec::len).sum();
    let tokens_per_sec = if seconds > 0.0 { source_tokens as f64 / seconds } else { 0.0 };
    Ok((
        out,
        ThroughputStats { source_tokens, sentences: sentences.len(), seconds, tokens_per_sec },
    ))
}
