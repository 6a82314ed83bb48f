//! Engine abstraction: one forward implementation, two executions.
//!
//! Model code is written once against [`Engine`]. `TapeEngine` records the
//! ops on a [`Tape`] for differentiation and planned execution (training);
//! `EagerEngine` evaluates them immediately with no graph (deployment).
//! Both delegate to the same kernels, so a given computation yields
//! bit-identical values through either engine.

use std::rc::Rc;

use crate::error::{TensorError, TensorResult};
use crate::kernels;
use crate::plan::run_naive;
use crate::tape::{Bindings, NodeId, Tape, ValueSource};
use crate::tensor::Tensor;

pub trait Engine {
    type V: Clone;

    /// Bring a non-differentiable input into the engine.
    fn constant(&mut self, t: &Tensor) -> Self::V;

    /// Like `constant`, but may avoid copying when the engine can share.
    fn constant_shared(&mut self, t: &Rc<Tensor>) -> Self::V {
        self.constant(t)
    }

    /// Bring a named trainable parameter into the engine.
    fn param(&mut self, name: &str, t: &Tensor) -> Self::V;

    fn matmul(&mut self, a: &Self::V, b: &Self::V) -> TensorResult<Self::V>;
    fn add(&mut self, a: &Self::V, b: &Self::V) -> TensorResult<Self::V>;
    fn sub(&mut self, a: &Self::V, b: &Self::V) -> TensorResult<Self::V>;
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> TensorResult<Self::V>;
    fn scale(&mut self, a: &Self::V, c: f64) -> TensorResult<Self::V>;
    fn sigmoid(&mut self, a: &Self::V) -> TensorResult<Self::V>;
    fn tanh(&mut self, a: &Self::V) -> TensorResult<Self::V>;
    fn add_bias(&mut self, m: &Self::V, bias: &Self::V) -> TensorResult<Self::V>;
    fn concat_cols(&mut self, a: &Self::V, b: &Self::V) -> TensorResult<Self::V>;
    fn slice_cols(&mut self, x: &Self::V, lo: usize, hi: usize) -> TensorResult<Self::V>;
    fn embed(&mut self, table: &Self::V, ids: &[u32]) -> TensorResult<Self::V>;
    fn softmax_rows(&mut self, x: &Self::V, mask: Option<&[bool]>) -> TensorResult<Self::V>;
    fn log_softmax_rows(&mut self, x: &Self::V) -> TensorResult<Self::V>;
    fn attn_scores(&mut self, query: &Self::V, keys: &[Self::V]) -> TensorResult<Self::V>;
    fn attn_context(&mut self, weights: &Self::V, values: &[Self::V]) -> TensorResult<Self::V>;
    fn pick_step_rows(&mut self, steps: &[Self::V], step_of_row: &[usize])
        -> TensorResult<Self::V>;
    fn nll_pick(&mut self, logp: &Self::V, targets: &[u32], weights: &[f64])
        -> TensorResult<Self::V>;
    fn dropout(&mut self, x: &Self::V, keep: &[f64]) -> TensorResult<Self::V>;

    /// Concrete values of the given handles. Recording engines may execute
    /// the graph once per call, so batch the lookups.
    fn materialize_many(&mut self, vs: &[Self::V]) -> TensorResult<Vec<Rc<Tensor>>>;
}

/// Immediate evaluation; values are shared tensors, no graph is kept.
#[derive(Debug, Default)]
pub struct EagerEngine;

impl EagerEngine {
    pub fn new() -> Self {
        EagerEngine
    }
}

impl Engine for EagerEngine {
    type V = Rc<Tensor>;

    fn constant(&mut self, t: &Tensor) -> Self::V {
        Rc::new(t.clone())
    }

    fn constant_shared(&mut self, t: &Rc<Tensor>) -> Self::V {
        Rc::clone(t)
    }

    fn param(&mut self, _name: &str, t: &Tensor) -> Self::V {
        Rc::new(t.clone())
    }

    fn matmul(&mut self, a: &Self::V, b: &Self::V) -> TensorResult<Self::V> {
        kernels::matmul(a, b).map(Rc::new)
    }

    fn add(&mut self, a: &Self::V, b: &Self::V) -> TensorResult<Self::V> {
        kernels::add(a, b).map(Rc::new)
    }

    fn sub(&mut self, a: &Self::V, b: &Self::V) -> TensorResult<Self::V> {
        kernels::sub(a, b).map(Rc::new)
    }

    fn mul(&mut self, a: &Self::V, b: &Self::V) -> TensorResult<Self::V> {
        kernels::mul(a, b).map(Rc::new)
    }

    fn scale(&mut self, a: &Self::V, c: f64) -> TensorResult<Self::V> {
        kernels::scale(a, c).map(Rc::new)
    }

    fn sigmoid(&mut self, a: &Self::V) -> TensorResult<Self::V> {
        kernels::sigmoid(a).map(Rc::new)
    }

    fn tanh(&mut self, a: &Self::V) -> TensorResult<Self::V> {
        kernels::tanh(a).map(Rc::new)
    }

    fn add_bias(&mut self, m: &Self::V, bias: &Self::V) -> TensorResult<Self::V> {
        kernels::add_bias(m, bias).map(Rc::new)
    }

    fn concat_cols(&mut self, a: &Self::V, b: &Self::V) -> TensorResult<Self::V> {
        kernels::concat_cols(a, b).map(Rc::new)
    }

    fn slice_cols(&mut self, x: &Self::V, lo: usize, hi: usize) -> TensorResult<Self::V> {
        kernels::slice_cols(x, lo, hi).map(Rc::new)
    }

    fn embed(&mut self, table: &Self::V, ids: &[u32]) -> TensorResult<Self::V> {
        kernels::embed_rows(table, ids).map(Rc::new)
    }

    fn softmax_rows(&mut self, x: &Self::V, mask: Option<&[bool]>) -> TensorResult<Self::V> {
        kernels::softmax_rows(x, mask).map(Rc::new)
    }

    fn log_softmax_rows(&mut self, x: &Self::V) -> TensorResult<Self::V> {
        kernels::log_softmax_rows(x).map(Rc::new)
    }

    fn attn_scores(&mut self, query: &Self::V, keys: &[Self::V]) -> TensorResult<Self::V> {
        let refs: Vec<&Tensor> = keys.iter().map(|k| k.as_ref()).collect();
        kernels::attn_scores(query, &refs).map(Rc::new)
    }

    fn attn_context(&mut self, weights: &Self::V, values: &[Self::V]) -> TensorResult<Self::V> {
        let refs: Vec<&Tensor> = values.iter().map(|v| v.as_ref()).collect();
        kernels::attn_context(weights, &refs).map(Rc::new)
    }

    fn pick_step_rows(
        &mut self,
        steps: &[Self::V],
        step_of_row: &[usize],
    ) -> TensorResult<Self::V> {
        let refs: Vec<&Tensor> = steps.iter().map(|s| s.as_ref()).collect();
        kernels::pick_step_rows(&refs, step_of_row).map(Rc::new)
    }

    fn nll_pick(
        &mut self,
        logp: &Self::V,
        targets: &[u32],
        weights: &[f64],
    ) -> TensorResult<Self::V> {
        kernels::nll_pick(logp, targets, weights).map(Rc::new)
    }

    fn dropout(&mut self, x: &Self::V, keep: &[f64]) -> TensorResult<Self::V> {
        kernels::mul_mask(x, keep).map(Rc::new)
    }

    fn materialize_many(&mut self, vs: &[Self::V]) -> TensorResult<Vec<Rc<Tensor>>> {
        Ok(vs.iter().map(Rc::clone).collect())
    }
}

/// Records ops on a tape with leaf bindings; execution is deferred.
#[derive(Debug, Default)]
pub struct TapeEngine {
    tape: Tape,
    bindings: Bindings,
    params: Vec<(String, NodeId)>,
}

impl TapeEngine {
    pub fn new() -> Self {
        TapeEngine { tape: Tape::new(), bindings: Bindings::new(), params: Vec::new() }
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn param_nodes(&self) -> &[(String, NodeId)] {
        &self.params
    }

    pub fn into_parts(self) -> (Tape, Bindings, Vec<(String, NodeId)>) {
        (self.tape, self.bindings, self.params)
    }
}

impl Engine for TapeEngine {
    type V = NodeId;

    fn constant(&mut self, t: &Tensor) -> Self::V {
        let id = self.tape.leaf(t.shape(), false);
        self.bindings.bind(&self.tape, id, t.clone()).expect("fresh leaf binds");
        id
    }

    fn param(&mut self, name: &str, t: &Tensor) -> Self::V {
        let id = self.tape.leaf(t.shape(), true);
        self.bindings.bind(&self.tape, id, t.clone()).expect("fresh leaf binds");
        self.params.push((name.to_string(), id));
        id
    }

    fn matmul(&mut self, a: &Self::V, b: &Self::V) -> TensorResult<Self::V> {
        self.tape.matmul(*a, *b)
    }

    fn add(&mut self, a: &Self::V, b: &Self::V) -> TensorResult<Self::V> {
        self.tape.add(*a, *b)
    }

    fn sub(&mut self, a: &Self::V, b: &Self::V) -> TensorResult<Self::V> {
        self.tape.sub(*a, *b)
    }

    fn mul(&mut self, a: &Self::V, b: &Self::V) -> TensorResult<Self::V> {
        self.tape.mul(*a, *b)
    }

    fn scale(&mut self, a: &Self::V, c: f64) -> TensorResult<Self::V> {
        Ok(self.tape.scale(*a, c))
    }

    fn sigmoid(&mut self, a: &Self::V) -> TensorResult<Self::V> {
        Ok(self.tape.sigmoid(*a))
    }

    fn tanh(&mut self, a: &Self::V) -> TensorResult<Self::V> {
        Ok(self.tape.tanh(*a))
    }

    fn add_bias(&mut self, m: &Self::V, bias: &Self::V) -> TensorResult<Self::V> {
        self.tape.add_bias(*m, *bias)
    }

    fn concat_cols(&mut self, a: &Self::V, b: &Self::V) -> TensorResult<Self::V> {
        self.tape.concat_cols(*a, *b)
    }

    fn slice_cols(&mut self, x: &Self::V, lo: usize, hi: usize) -> TensorResult<Self::V> {
        self.tape.slice_cols(*x, lo, hi)
    }

    fn embed(&mut self, table: &Self::V, ids: &[u32]) -> TensorResult<Self::V> {
        self.tape.embed_rows(*table, ids)
    }

    fn softmax_rows(&mut self, x: &Self::V, mask: Option<&[bool]>) -> TensorResult<Self::V> {
        self.tape.softmax_rows(*x, mask)
    }

    fn log_softmax_rows(&mut self, x: &Self::V) -> TensorResult<Self::V> {
        self.tape.log_softmax_rows(*x)
    }

    fn attn_scores(&mut self, query: &Self::V, keys: &[Self::V]) -> TensorResult<Self::V> {
        self.tape.attn_scores(*query, keys)
    }

    fn attn_context(&mut self, weights: &Self::V, values: &[Self::V]) -> TensorResult<Self::V> {
        self.tape.attn_context(*weights, values)
    }

    fn pick_step_rows(
        &mut self,
        steps: &[Self::V],
        step_of_row: &[usize],
    ) -> TensorResult<Self::V> {
        self.tape.pick_step_rows(steps, step_of_row)
    }

    fn nll_pick(
        &mut self,
        logp: &Self::V,
        targets: &[u32],
        weights: &[f64],
    ) -> TensorResult<Self::V> {
        self.tape.nll_pick(*logp, targets, weights)
    }

    fn dropout(&mut self, x: &Self::V, keep: &[f64]) -> TensorResult<Self::V> {
        self.tape.dropout(*x, keep)
    }

    fn materialize_many(&mut self, vs: &[Self::V]) -> TensorResult<Vec<Rc<Tensor>>> {
        if let Some(&bad) = vs.iter().find(|&&v| v >= self.tape.len()) {
            return Err(TensorError::Invalid { what: format!("node {bad} out of range") });
        }
        let exec = run_naive(&self.tape, &self.bindings)?;
        Ok(vs
            .iter()
            .map(|&v| {
                Rc::new(
                    Tensor::new(self.tape.shape(v).to_vec(), exec.val(v).to_vec())
                        .expect("executed node has consistent shape"),
                )
            })
            .collect())
    }
}
