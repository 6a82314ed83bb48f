//! Teacher-forced scoring of aligned pairs.

use crate::error::ModelResult;
use crate::model::ForwardBackend;
use crate::textpipe::{IdMat, BOS, EOS};

/// Log-probability of the reference target given the source, and the
/// per-token perplexity exp(-logprob / T) where T counts content tokens
/// plus the final EOS.
pub fn score_pair<B: ForwardBackend>(
    backend: &B,
    src: &[u32],
    tgt: &[u32],
    src_factors: &[Vec<u32>],
    tgt_factors: &[Vec<u32>],
) -> ModelResult<(f64, f64)> {
    let src_mat = IdMat { rows: 1, cols: src.len(), data: src.to_vec() };
    let factor_mats: Vec<IdMat> = src_factors
        .iter()
        .map(|f| IdMat { rows: 1, cols: f.len(), data: f.clone() })
        .collect();
    let enc = backend.encode(&src_mat, &[src.len()], &factor_mats)?;
    let mut state = backend.init_state(&enc);

    let n_factors = backend.config().factors.len();
    let mut seq = Vec::with_capacity(tgt.len() + 2);
    seq.push(BOS);
    seq.extend_from_slice(tgt);
    seq.push(EOS);
    let factor_seq = |j: usize| -> Vec<u32> {
        let mut s = Vec::with_capacity(tgt.len() + 2);
        s.push(BOS);
        if let Some(f) = tgt_factors.get(j) {
            s.extend_from_slice(f);
        }
        s.push(EOS);
        s
    };
    let factor_seqs: Vec<Vec<u32>> = (0..n_factors).map(factor_seq).collect();

    let mut total = 0.0;
    for t in 1..seq.len() {
        let prev_factor_ids: Vec<Vec<u32>> =
            factor_seqs.iter().map(|f| vec![f[t - 1]]).collect();
        let out = backend.step(&enc, &state, &[seq[t - 1]], &prev_factor_ids)?;
        total += out.log_probs.row(0)[seq[t] as usize];
        state = out.state;
    }
    let tokens = (tgt.len() + 1) as f64;
    Ok((total, (-total / tokens).exp()))
}
