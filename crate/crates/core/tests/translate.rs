//! Beam search contracts: greedy equivalence, exhaustive-search optimality
//! on tiny vocabularies, monotone quality in beam width, batching
//! invariance, and termination guarantees.

use std::rc::Rc;

use minnmt_core::error::ModelResult;
use minnmt_core::model::{
    DecState, EagerBackend, EncodedBatch, ForwardBackend, ModelConfig, ModelParams, StepOutput,
};
use minnmt_core::textpipe::{IdMat, BOS, EOS, PAD};
use minnmt_core::translate::{
    beam_search, beam_search_with, is_well_formed, score_pair, translate_batch, BeamConfig,
};
use minnmt_tensor::Tensor;

fn tiny_cfg(h: usize, e: usize) -> ModelConfig {
    ModelConfig { num_layers: 1, rnn_size: h, embedding_dim: e, ..ModelConfig::default() }
}

/// Backend whose next-token distribution is a fixed script per time step,
/// independent of history; enough to exercise the search logic in
/// isolation.
struct ScriptBackend {
    cfg: ModelConfig,
    table: Vec<Vec<f64>>, // step -> log-prob row
}

impl ScriptBackend {
    fn new(table: Vec<Vec<f64>>) -> Self {
        ScriptBackend { cfg: tiny_cfg(1, 1), table }
    }

    fn row_for(&self, t: usize) -> &[f64] {
        &self.table[t.min(self.table.len() - 1)]
    }
}

impl ForwardBackend for ScriptBackend {
    fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn encode(
        &self,
        src: &IdMat,
        src_lens: &[usize],
        _src_factors: &[IdMat],
    ) -> ModelResult<EncodedBatch> {
        Ok(EncodedBatch {
            top: Vec::new(),
            init_h: Vec::new(),
            init_c: Vec::new(),
            mask: Vec::new(),
            rows: src.rows,
            src_lens: src_lens.to_vec(),
        })
    }

    fn init_state(&self, enc: &EncodedBatch) -> DecState {
        DecState {
            h: vec![Rc::new(Tensor::zeros(&[enc.rows, 1]))],
            c: Vec::new(),
            feed: None,
        }
    }

    fn step(
        &self,
        _enc: &EncodedBatch,
        state: &DecState,
        prev_ids: &[u32],
        _prev_factor_ids: &[Vec<u32>],
    ) -> ModelResult<StepOutput> {
        let counters = &state.h[0];
        let rows = prev_ids.len();
        let v = self.table[0].len();
        let mut logp = Vec::with_capacity(rows * v);
        let mut next = Vec::with_capacity(rows);
        for r in 0..rows {
            let t = counters.data()[r] as usize;
            logp.extend_from_slice(self.row_for(t));
            next.push((t + 1) as f64);
        }
        Ok(StepOutput {
            log_probs: Rc::new(Tensor::new(vec![rows, v], logp).unwrap()),
            factor_log_probs: Vec::new(),
            attn: Rc::new(Tensor::zeros(&[rows, 1])),
            state: DecState {
                h: vec![Rc::new(Tensor::new(vec![rows, 1], next).unwrap())],
                c: Vec::new(),
                feed: None,
            },
        })
    }
}

fn greedy_reference(backend: &ScriptBackend, max_len: usize) -> (Vec<u32>, f64) {
    let mut tokens = Vec::new();
    let mut score = 0.0;
    for t in 0.. {
        let row = backend.row_for(t);
        let mut best = EOS;
        for (i, &lp) in row.iter().enumerate() {
            let tok = i as u32;
            if tok == PAD || tok == BOS {
                continue;
            }
            if lp > row[best as usize] || (lp == row[best as usize] && tok < best) {
                best = tok;
            }
        }
        if tokens.len() >= max_len {
            best = EOS;
        }
        score += row[best as usize];
        tokens.push(best);
        if best == EOS {
            break;
        }
    }
    (tokens, score)
}

#[test]
fn beam_one_is_greedy() {
    // V=6: specials 0..=3 plus two content tokens
    let table = vec![
        vec![-9.0, -5.0, -9.0, -4.0, -1.0, -2.0],
        vec![-9.0, -1.5, -9.0, -3.0, -2.0, -1.0],
        vec![-9.0, -4.0, -9.0, -0.5, -2.0, -3.0],
    ];
    let backend = ScriptBackend::new(table);
    let beam = BeamConfig { beam_size: 1, ..Default::default() };
    let hyps = beam_search_with(&backend, &[4, 4], &[], &beam).unwrap();
    let (want_tokens, want_score) = greedy_reference(&backend, beam.max_len_for(2));
    assert_eq!(hyps[0].tokens, want_tokens);
    assert!((hyps[0].score - want_score).abs() < 1e-12);
}

#[test]
fn point_mass_model_decodes_its_sequence_with_score_zero() {
    let mass = |tok: usize| {
        let mut row = vec![-1.0e3; 6];
        row[tok] = 0.0;
        row
    };
    let backend = ScriptBackend::new(vec![mass(5), mass(4), mass(4), mass(EOS as usize)]);
    let hyps = beam_search_with(&backend, &[4], &[], &BeamConfig::default()).unwrap();
    assert_eq!(hyps[0].tokens, vec![5, 4, 4, EOS]);
    assert_eq!(hyps[0].score, 0.0);
}

#[test]
fn max_length_forces_scored_eos() {
    // EOS is always terrible: search must still terminate at max_length and
    // charge the EOS log-prob.
    let row = vec![-9.0, -8.0, -9.0, -20.0, -0.5, -0.6];
    let backend = ScriptBackend::new(vec![row.clone()]);
    let beam = BeamConfig { beam_size: 2, max_length: Some(3), ..Default::default() };
    let hyps = beam_search_with(&backend, &[4], &[], &beam).unwrap();
    let best = &hyps[0];
    assert_eq!(best.tokens.len(), 4); // 3 content + EOS
    assert_eq!(*best.tokens.last().unwrap(), EOS);
    assert!((best.score - (3.0 * -0.5 + -20.0)).abs() < 1e-12);
}

/// Exhaustive oracle: all content sequences up to max_len over the allowed
/// alphabet, each terminated by EOS and teacher-force scored.
fn exhaustive_argmax<B: ForwardBackend>(
    backend: &B,
    src: &[u32],
    vocab: usize,
    max_len: usize,
) -> (Vec<u32>, f64) {
    let alphabet: Vec<u32> =
        (0..vocab as u32).filter(|&t| t != PAD && t != BOS && t != EOS).collect();
    let mut best: Option<(Vec<u32>, f64)> = None;
    let mut stack: Vec<Vec<u32>> = vec![Vec::new()];
    while let Some(prefix) = stack.pop() {
        let (logprob, _) = score_pair(backend, src, &prefix, &[], &[]).unwrap();
        match &best {
            Some((_, s)) if *s >= logprob => {}
            _ => {
                let mut tokens = prefix.clone();
                tokens.push(EOS);
                best = Some((tokens, logprob));
            }
        }
        if prefix.len() < max_len {
            for &a in &alphabet {
                let mut next = prefix.clone();
                next.push(a);
                stack.push(next);
            }
        }
    }
    best.unwrap()
}

#[test]
fn beam_equals_exhaustive_search_on_tiny_models() {
    for seed in 0..5u64 {
        let cfg = tiny_cfg(4, 3);
        let params = ModelParams::init(&cfg, 5, 5, 100 + seed).unwrap();
        let backend = EagerBackend::new(cfg, &params);
        let src = vec![4, 4, 4];
        let beam = BeamConfig {
            beam_size: 625,
            max_length: Some(4),
            n_best: 1,
            ..Default::default()
        };
        let hyps = beam_search_with(&backend, &src, &[], &beam).unwrap();
        let (want_tokens, want_score) = exhaustive_argmax(&backend, &src, 5, 4);
        assert_eq!(hyps[0].tokens, want_tokens, "seed {seed}");
        assert!((hyps[0].score - want_score).abs() < 1e-10, "seed {seed}");
    }
}

#[test]
fn reported_score_matches_teacher_forced_rescoring() {
    let cfg = tiny_cfg(5, 4);
    let params = ModelParams::init(&cfg, 9, 9, 7).unwrap();
    let backend = EagerBackend::new(cfg, &params);
    let hyps = beam_search_with(&backend, &[4, 6, 5], &[], &BeamConfig::default()).unwrap();
    let best = &hyps[0];
    let (rescored, _) = score_pair(&backend, &[4, 6, 5], best.content_tokens(), &[], &[]).unwrap();
    assert!((best.score - rescored).abs() < 1e-10);
}

#[test]
fn wider_beams_never_find_worse_best_hypotheses() {
    for seed in 0..50u64 {
        let cfg = tiny_cfg(3, 2);
        let params = ModelParams::init(&cfg, 7, 7, 1000 + seed).unwrap();
        let backend = EagerBackend::new(cfg, &params);
        let src = vec![4 + (seed % 3) as u32, 5, 6];
        let mut prev = f64::NEG_INFINITY;
        for k in 1..=8 {
            let beam = BeamConfig { beam_size: k, max_length: Some(6), ..Default::default() };
            let hyps = beam_search_with(&backend, &src, &[], &beam).unwrap();
            assert!(
                hyps[0].score >= prev - 1e-12,
                "seed {seed}: beam {k} best {} < beam {} best {prev}",
                hyps[0].score,
                k - 1
            );
            prev = hyps[0].score;
        }
    }
}

#[test]
fn results_are_independent_of_batch_size() {
    let cfg = tiny_cfg(6, 5);
    let params = ModelParams::init(&cfg, 11, 11, 5).unwrap();
    let backend = EagerBackend::new(cfg, &params);
    let sentences: Vec<Vec<u32>> = (0..17)
        .map(|i| (0..(1 + i % 5)).map(|j| 4 + ((i + j) % 7) as u32).collect())
        .collect();
    let beam = BeamConfig { beam_size: 4, n_best: 2, ..Default::default() };
    let (one, _) = translate_batch(&backend, &sentences, &[], &beam, 1).unwrap();
    let (seven, _) = translate_batch(&backend, &sentences, &[], &beam, 7).unwrap();
    let (thirty, _) = translate_batch(&backend, &sentences, &[], &beam, 30).unwrap();
    for i in 0..sentences.len() {
        for (a, b) in one[i].iter().zip(&seven[i]) {
            assert_eq!(a.tokens, b.tokens, "sentence {i}");
            assert_eq!(a.score, b.score, "sentence {i}");
        }
        for (a, b) in one[i].iter().zip(&thirty[i]) {
            assert_eq!(a.tokens, b.tokens, "sentence {i}");
            assert_eq!(a.score, b.score, "sentence {i}");
        }
    }
}

#[test]
fn every_hypothesis_is_well_formed() {
    // random models and the degenerate all-zero model
    for seed in [0u64, 1, 2] {
        let cfg = tiny_cfg(3, 2);
        let mut params = ModelParams::init(&cfg, 8, 8, seed).unwrap();
        if seed == 2 {
            params = ModelParams::zeros_like(&params);
        }
        let beam = BeamConfig { beam_size: 3, n_best: 3, ..Default::default() };
        let hyps = beam_search(&[4, 5], &params, &cfg, &beam).unwrap();
        assert!(!hyps.is_empty());
        for h in &hyps {
            assert!(is_well_formed(h), "seed {seed}: {:?}", h.tokens);
        }
    }
}

#[test]
fn uniform_model_scores_are_closed_form() {
    let cfg = tiny_cfg(4, 3);
    let vocab = 9usize;
    let params = ModelParams::zeros_like(&ModelParams::init(&cfg, vocab, vocab, 0).unwrap());
    let backend = EagerBackend::new(cfg, &params);
    let tgt = vec![4, 5, 6];
    let (logprob, ppl) = score_pair(&backend, &[4, 4], &tgt, &[], &[]).unwrap();
    let t = (tgt.len() + 1) as f64;
    assert!((logprob + t * (vocab as f64).ln()).abs() < 1e-10);
    assert!((ppl - vocab as f64).abs() < 1e-9);
}

#[test]
fn point_mass_perplexity_is_one() {
    let mass = |tok: usize| {
        let mut row = vec![-1.0e3; 6];
        row[tok] = 0.0;
        row
    };
    let backend = ScriptBackend::new(vec![mass(4), mass(5), mass(EOS as usize)]);
    let (logprob, ppl) = score_pair(&backend, &[4], &[4, 5], &[], &[]).unwrap();
    assert_eq!(logprob, 0.0);
    assert_eq!(ppl, 1.0);
}

#[test]
fn empty_inputs_pass_through() {
    let cfg = tiny_cfg(3, 2);
    let params = ModelParams::init(&cfg, 6, 6, 1).unwrap();
    let backend = EagerBackend::new(cfg, &params);
    let (out, stats) = translate_batch::<EagerBackend>(
        &backend,
        &[],
        &[],
        &BeamConfig::default(),
        8,
    )
    .unwrap();
    assert!(out.is_empty());
    assert_eq!(stats.source_tokens, 0);

    let (out, _) =
        translate_batch(&backend, &[vec![], vec![4, 5]], &[], &BeamConfig::default(), 8).unwrap();
    assert_eq!(out[0][0].tokens, vec![EOS]);
    assert_eq!(out[0][0].score, 0.0);
    assert!(is_well_formed(&out[1][0]));
}

#[test]
fn n_best_is_sorted_and_bounded() {
    let cfg = tiny_cfg(4, 3);
    let params = ModelParams::init(&cfg, 7, 7, 99).unwrap();
    let beam = BeamConfig { beam_size: 6, n_best: 4, ..Default::default() };
    let hyps = beam_search(&[4, 5, 6], &params, &cfg, &beam).unwrap();
    assert!(hyps.len() <= 4 && !hyps.is_empty());
    for pair in hyps.windows(2) {
        assert!(pair[0].score >= pair[1].score);
    }
}

#[test]
fn bad_beam_configs_are_rejected() {
    let cfg = tiny_cfg(3, 2);
    let params = ModelParams::init(&cfg, 6, 6, 1).unwrap();
    let zero = BeamConfig { beam_size: 0, ..Default::default() };
    assert!(beam_search(&[4], &params, &cfg, &zero).is_err());
    let n_best = BeamConfig { beam_size: 2, n_best: 3, ..Default::default() };
    assert!(beam_search(&[4], &params, &cfg, &n_best).is_err());
    assert!(beam_search(&[], &params, &cfg, &BeamConfig::default()).is_err());
}
