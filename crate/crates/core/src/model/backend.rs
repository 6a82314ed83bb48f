//! Concrete forward execution behind a small trait so translation code can
//! run against either the eager deployment path or a recording engine.

use std::rc::Rc;

use minnmt_tensor::{EagerEngine, Tensor};

use super::config::ModelConfig;
use super::forward::{self, EncodedView, ParamsView, StateView};
use super::params::ModelParams;
use crate::error::ModelResult;
use crate::textpipe::IdMat;

/// Encoder output as plain tensors, shareable across decode steps.
#[derive(Clone)]
pub struct EncodedBatch {
    pub top: Vec<Rc<Tensor>>,
    pub init_h: Vec<Rc<Tensor>>,
    pub init_c: Vec<Rc<Tensor>>,
    pub mask: Vec<bool>,
    pub rows: usize,
    pub src_lens: Vec<usize>,
}

impl EncodedBatch {
    pub fn steps(&self) -> usize {
        self.top.len()
    }

    /// New batch whose row r is this batch's row idx[r]; indices may repeat
    /// (used to replicate one sentence across beam hypotheses).
    pub fn gather_rows(&self, idx: &[usize]) -> EncodedBatch {
        let gather = |ts: &Vec<Rc<Tensor>>| -> Vec<Rc<Tensor>> {
            ts.iter().map(|t| Rc::new(t.gather_rows(idx).expect("valid row index"))).collect()
        };
        let s = self.steps();
        let mut mask = vec![false; idx.len() * s];
        for (r, &i) in idx.iter().enumerate() {
            mask[r * s..(r + 1) * s].copy_from_slice(&self.mask[i * s..(i + 1) * s]);
        }
        EncodedBatch {
            top: gather(&self.top),
            init_h: gather(&self.init_h),
            init_c: gather(&self.init_c),
            mask,
            rows: idx.len(),
            src_lens: idx.iter().map(|&i| self.src_lens[i]).collect(),
        }
    }
}

/// Decoder state as plain tensors.
#[derive(Clone)]
pub struct DecState {
    pub h: Vec<Rc<Tensor>>,
    pub c: Vec<Rc<Tensor>>,
    pub feed: Option<Rc<Tensor>>,
}

impl DecState {
    pub fn gather_rows(&self, idx: &[usize]) -> DecState {
        let gather = |ts: &Vec<Rc<Tensor>>| -> Vec<Rc<Tensor>> {
            ts.iter().map(|t| Rc::new(t.gather_rows(idx).expect("valid row index"))).collect()
        };
        DecState {
            h: gather(&self.h),
            c: gather(&self.c),
            feed: self
                .feed
                .as_ref()
                .map(|t| Rc::new(t.gather_rows(idx).expect("valid row index"))),
        }
    }
}

pub struct StepOutput {
    pub log_probs: Rc<Tensor>,
    pub factor_log_probs: Vec<Rc<Tensor>>,
    pub attn: Rc<Tensor>,
    pub state: DecState,
}

/// Forward-only model execution for search and scoring.
pub trait ForwardBackend {
    fn config(&self) -> &ModelConfig;

    fn encode(
        &self,
        src: &IdMat,
        src_lens: &[usize],
        src_factors: &[IdMat],
    ) -> ModelResult<EncodedBatch>;

    fn init_state(&self, enc: &EncodedBatch) -> DecState;

    fn step(
        &self,
        enc: &EncodedBatch,
        state: &DecState,
        prev_ids: &[u32],
        prev_factor_ids: &[Vec<u32>],
    ) -> ModelResult<StepOutput>;
}

fn build_mask(rows: usize, cols: usize, lens: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; rows * cols];
    for (r, &len) in lens.iter().enumerate() {
        for s in 0..len.min(cols) {
            mask[r * cols + s] = true;
        }
    }
    mask
}

/// Deployment path: plain tensor evaluation, no tape, no gradients.
pub struct EagerBackend {
    cfg: ModelConfig,
    view: ParamsView<Rc<Tensor>>,
}

impl EagerBackend {
    pub fn new(cfg: ModelConfig, params: &ModelParams) -> Self {
        let mut e = EagerEngine::new();
        let view = forward::register_params(&mut e, params);
        EagerBackend { cfg, view }
    }

    fn enc_view(&self, enc: &EncodedBatch) -> EncodedView<Rc<Tensor>> {
        EncodedView {
            top: enc.top.clone(),
            init_h: enc.init_h.clone(),
            init_c: enc.init_c.clone(),
            mask: enc.mask.clone(),
            rows: enc.rows,
        }
    }
}

impl ForwardBackend for EagerBackend {
    fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn encode(
        &self,
        src: &IdMat,
        src_lens: &[usize],
        src_factors: &[IdMat],
    ) -> ModelResult<EncodedBatch> {
        let mut e = EagerEngine::new();
        let mask = build_mask(src.rows, src.cols, src_lens);
        let enc = forward::encode(
            &mut e,
            &self.view,
            &self.cfg,
            src,
            src_lens,
            src_factors,
            &mask,
            &mut None,
        )?;
        Ok(EncodedBatch {
            top: enc.top,
            init_h: enc.init_h,
            init_c: enc.init_c,
            mask: enc.mask,
            rows: enc.rows,
            src_lens: src_lens.to_vec(),
        })
    }

    fn init_state(&self, enc: &EncodedBatch) -> DecState {
        let mut e = EagerEngine::new();
        let view = self.enc_view(enc);
        let state = forward::init_state(&mut e, &self.cfg, &view);
        DecState { h: state.h, c: state.c, feed: state.feed }
    }

    fn step(
        &self,
        enc: &EncodedBatch,
        state: &DecState,
        prev_ids: &[u32],
        prev_factor_ids: &[Vec<u32>],
    ) -> ModelResult<StepOutput> {
        let mut e = EagerEngine::new();
        let view = self.enc_view(enc);
        let state_view = StateView {
            h: state.h.clone(),
            c: state.c.clone(),
            feed: state.feed.clone(),
        };
        let out = forward::decode_step(
            &mut e,
            &self.view,
            &self.cfg,
            &view,
            &state_view,
            prev_ids,
            prev_factor_ids,
            &mut None,
        )?;
        Ok(StepOutput {
            log_probs: out.log_probs,
            factor_log_probs: out.factor_log_probs,
            attn: out.attn,
            state: DecState { h: out.state.h, c: out.state.c, feed: out.state.feed },
        })
    }
}
