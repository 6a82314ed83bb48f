//! Beam search over a forward backend.
//!
//! Hypotheses of every sentence in a group decode together: each active
//! sentence owns `beam_size` tensor rows, finished sentences are compacted
//! out, and per-row computation is independent, so results are bitwise
//! identical no matter how sentences are grouped.

use crate::error::{ModelError, ModelResult};
use crate::model::{DecState, EncodedBatch, ForwardBackend};
use crate::textpipe::{BOS, EOS, PAD};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthNorm {
    None,
    ByLength,
}

#[derive(Debug, Clone)]
pub struct BeamConfig {
    pub beam_size: usize,
    /// Cap on emitted content tokens; `None` means 2*source_len + 5. A
    /// hypothesis reaching the cap is forced to emit (and be scored for)
    /// the end-of-sentence token.
    pub max_length: Option<usize>,
    pub n_best: usize,
    pub length_norm: LengthNorm,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig { beam_size: 5, max_length: None, n_best: 1, length_norm: LengthNorm::None }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> ModelResult<()> {
        if self.beam_size == 0 {
            return Err(ModelError::Invalid { what: "beam size must be at least 1".into() });
        }
        if self.n_best == 0 || self.n_best > self.beam_size {
            return Err(ModelError::Invalid {
                what: format!(
                    "n_best {} outside 1..={}",
                    self.n_best, self.beam_size
                ),
            });
        }
        Ok(())
    }

    pub fn max_len_for(&self, src_len: usize) -> usize {
        self.max_length.unwrap_or(2 * src_len + 5)
    }
}

/// A finished translation: content tokens terminated by EOS, its exact
/// cumulative log-probability, and greedily chosen factor ids per content
/// token when the model is factored.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredHypothesis {
    pub tokens: Vec<u32>,
    pub factor_tokens: Vec<Vec<u32>>,
    pub score: f64,
}

impl ScoredHypothesis {
    pub fn content_tokens(&self) -> &[u32] {
        match self.tokens.split_last() {
            Some((&last, rest)) if last == EOS => rest,
            _ => &self.tokens,
        }
    }
}

#[derive(Clone)]
struct LiveHyp {
    tokens: Vec<u32>,
    factors: Vec<Vec<u32>>,
    score: f64,
}

struct SentSearch {
    max_len: usize,
    live: Vec<LiveHyp>,
    finished: Vec<ScoredHypothesis>,
    done: bool,
}

fn argmax_row(data: &[f64]) -> u32 {
    let mut best = 0usize;
    for (i, &v) in data.iter().enumerate() {
        if v > data[best] {
            best = i;
        }
    }
    best as u32
}

/// Decode every sentence of an encoded group; returns n_best finished
/// hypotheses per sentence, best first.
pub fn beam_decode_group<B: ForwardBackend>(
    backend: &B,
    enc: &EncodedBatch,
    beam: &BeamConfig,
) -> ModelResult<Vec<Vec<ScoredHypothesis>>> {
    beam.validate()?;
    let k = beam.beam_size;
    let n_factors = backend.config().factors.len();
    let n_sents = enc.rows;
    if n_sents == 0 {
        return Ok(Vec::new());
    }

    let mut sents: Vec<SentSearch> = (0..n_sents)
        .map(|i| SentSearch {
            max_len: beam.max_len_for(enc.src_lens[i]),
            live: vec![LiveHyp {
                tokens: Vec::new(),
                factors: vec![Vec::new(); n_factors],
                score: 0.0,
            }],
            finished: Vec::new(),
            done: false,
        })
        .collect();

    let mut active: Vec<usize> = (0..n_sents).collect();
    let replicate = |sentences: &[usize]| -> Vec<usize> {
        sentences.iter().flat_map(|&s| std::iter::repeat(s).take(k)).collect()
    };
    let mut enc_rows = enc.gather_rows(&replicate(&active));
    let mut state: DecState = backend.init_state(&enc_rows);
    let mut prev: Vec<u32> = vec![BOS; active.len() * k];
    let mut prev_factors: Vec<Vec<u32>> = vec![vec![BOS; active.len() * k]; n_factors];

    let step_limit = 3 + sents.iter().map(|s| s.max_len).max().unwrap_or(0);
    let mut steps = 0usize;
    while !active.is_empty() {
        steps += 1;
        assert!(steps <= step_limit, "beam search failed to terminate");

        let out = backend.step(&enc_rows, &state, &prev, &prev_factors)?;
        let vocab = out.log_probs.shape()[1];

        let mut next_active: Vec<usize> = Vec::new();
        let mut parents: Vec<usize> = Vec::new();
        let mut next_prev: Vec<u32> = Vec::new();
        let mut next_prev_factors: Vec<Vec<u32>> = vec![Vec::new(); n_factors];

        for (a_pos, &s_idx) in active.iter().enumerate() {
            let sent = &mut sents[s_idx];
            let base_row = a_pos * k;

            let mut cands: Vec<(f64, u32, usize)> = Vec::new();
            for (h, hyp) in sent.live.iter().enumerate() {
                let lp = out.log_probs.row(base_row + h);
                if hyp.tokens.len() >= sent.max_len {
                    cands.push((hyp.score + lp[EOS as usize], EOS, h));
                    continue;
                }
                for tok in 0..vocab as u32 {
                    if tok == PAD || tok == BOS {
                        continue;
                    }
                    cands.push((hyp.score + lp[tok as usize], tok, h));
                }
            }
            cands.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .expect("finite scores")
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            cands.truncate(k);

            let mut new_live: Vec<(LiveHyp, usize)> = Vec::new();
            for (score, tok, h) in cands {
                let parent = &sent.live[h];
                if tok == EOS {
                    let mut tokens = parent.tokens.clone();
                    tokens.push(EOS);
                    sent.finished.push(ScoredHypothesis {
                        tokens,
                        factor_tokens: parent.factors.clone(),
                        score,
                    });
                } else {
                    let row = base_row + h;
                    let mut tokens = parent.tokens.clone();
                    tokens.push(tok);
                    let mut factors = parent.factors.clone();
                    for (j, flp) in out.factor_log_probs.iter().enumerate() {
                        factors[j].push(argmax_row(flp.row(row)));
                    }
                    new_live.push((LiveHyp { tokens, factors, score }, row));
                }
            }

            let finished_cannot_be_beaten = if new_live.is_empty() {
                true
            } else if sent.finished.len() >= k {
                let mut fs: Vec<f64> = sent.finished.iter().map(|f| f.score).collect();
                fs.sort_by(|a, b| b.partial_cmp(a).expect("finite scores"));
                let kth = fs[k - 1];
                let best_live =
                    new_live.iter().map(|(h, _)| h.score).fold(f64::NEG_INFINITY, f64::max);
                best_live <= kth
            } else {
                false
            };

            if finished_cannot_be_beaten {
                sent.done = true;
                sent.live.clear();
                continue;
            }

            next_active.push(s_idx);
            let pad_parent = new_live[0].1;
            for i in 0..k {
                match new_live.get(i) {
                    Some((hyp, parent_row)) => {
                        parents.push(*parent_row);
                        next_prev.push(*hyp.tokens.last().expect("expanded hyp has a token"));
                        for (j, nf) in next_prev_factors.iter_mut().enumerate() {
                            nf.push(*hyp.factors[j].last().expect("factor per token"));
                        }
                    }
                    None => {
                        // dead row: keeps shapes rectangular, output ignored
                        parents.push(pad_parent);
                        next_prev.push(PAD);
                        for nf in next_prev_factors.iter_mut() {
                            nf.push(PAD);
                        }
                    }
                }
            }
            sent.live = new_live.into_iter().map(|(h, _)| h).collect();
        }

        if next_active.is_empty() {
            break;
        }
        state = out.state.gather_rows(&parents);
        if next_active != active {
            active = next_active;
            enc_rows = enc.gather_rows(&replicate(&active));
        }
        prev = next_prev;
        prev_factors = next_prev_factors;
    }

    Ok(sents
        .into_iter()
        .map(|sent| {
            let mut fin = sent.finished;
            let rank = |h: &ScoredHypothesis| match beam.length_norm {
                LengthNorm::None => h.score,
                LengthNorm::ByLength => h.score / h.tokens.len() as f64,
            };
            fin.sort_by(|a, b| {
                rank(b)
                    .partial_cmp(&rank(a))
                    .expect("finite scores")
                    .then_with(|| a.tokens.cmp(&b.tokens))
            });
            fin.truncate(beam.n_best);
            fin
        })
        .collect())
}

/// Single-sentence beam search against any backend.
pub fn beam_search_with<B: ForwardBackend>(
    backend: &B,
    src: &[u32],
    src_factors: &[Vec<u32>],
    beam: &BeamConfig,
) -> ModelResult<Vec<ScoredHypothesis>> {
    if src.is_empty() {
        return Err(ModelError::Invalid { what: "beam search needs a non-empty source".into() });
    }
    let src_mat = crate::textpipe::IdMat { rows: 1, cols: src.len(), data: src.to_vec() };
    let factor_mats: Vec<crate::textpipe::IdMat> = src_factors
        .iter()
        .map(|f| crate::textpipe::IdMat { rows: 1, cols: f.len(), data: f.clone() })
        .collect();
    let enc = backend.encode(&src_mat, &[src.len()], &factor_mats)?;
    let mut results = beam_decode_group(backend, &enc, beam)?;
    Ok(results.pop().expect("one sentence in, one out"))
}

/// Single-sentence beam search on model parameters via the eager
/// deployment path.
pub fn beam_search(
    src: &[u32],
    params: &crate::model::ModelParams,
    cfg: &crate::model::ModelConfig,
    beam: &BeamConfig,
) -> ModelResult<Vec<ScoredHypothesis>> {
    let backend = crate::model::EagerBackend::new(cfg.clone(), params);
    beam_search_with(&backend, src, &[], beam)
}
