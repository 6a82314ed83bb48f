//! Recorded computation graph for reverse-mode differentiation and buffer
//! planning.
//!
//! Recording is symbolic: node shapes are inferred and validated up front,
//! values are produced later by an executor (`run_naive` or `run_with_plan`
//! in `plan`). `backward` then walks the tape in reverse reading saved
//! activations from whichever execution produced them.

use std::collections::BTreeMap;

use crate::error::{TensorError, TensorResult};
use crate::tensor::Tensor;

pub type NodeId = usize;

#[derive(Debug, Clone)]
pub enum Op {
    /// Input or parameter; value supplied through `Bindings`.
    Leaf { param: bool },
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    AddBias(NodeId, NodeId),
    ConcatCols(NodeId, NodeId),
    SliceCols { x: NodeId, lo: usize, hi: usize },
    EmbedRows { table: NodeId, ids: Vec<u32> },
    SoftmaxRows { x: NodeId, mask: Option<Vec<bool>> },
    LogSoftmaxRows(NodeId),
    AttnScores { query: NodeId, keys: Vec<NodeId> },
    AttnContext { weights: NodeId, values: Vec<NodeId> },
    PickStepRows { steps: Vec<NodeId>, step_of_row: Vec<usize> },
    NllPick { logp: NodeId, targets: Vec<u32>, weights: Vec<f64> },
    SumAll(NodeId),
    Dropout { x: NodeId, keep: Vec<f64> },
}

impl Op {
    pub fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf { .. } => vec![],
            Op::Matmul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddBias(a, b)
            | Op::ConcatCols(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Exp(a)
            | Op::LogSoftmaxRows(a)
            | Op::SumAll(a) => vec![*a],
            Op::SliceCols { x, .. }
            | Op::SoftmaxRows { x, .. }
            | Op::NllPick { logp: x, .. }
            | Op::Dropout { x, .. } => vec![*x],
            Op::EmbedRows { table, .. } => vec![*table],
            Op::AttnScores { query, keys } => {
                let mut v = vec![*query];
                v.extend_from_slice(keys);
                v
            }
            Op::AttnContext { weights, values } => {
                let mut v = vec![*weights];
                v.extend_from_slice(values);
                v
            }
            Op::PickStepRows { steps, .. } => steps.clone(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf { .. } => "leaf",
            Op::Matmul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Exp(..) => "exp",
            Op::AddBias(..) => "add_bias",
            Op::ConcatCols(..) => "concat_cols",
            Op::SliceCols { .. } => "slice_cols",
            Op::EmbedRows { .. } => "embed_rows",
            Op::SoftmaxRows { .. } => "softmax_rows",
            Op::LogSoftmaxRows(..) => "log_softmax_rows",
            Op::AttnScores { .. } => "attn_scores",
            Op::AttnContext { .. } => "attn_context",
            Op::PickStepRows { .. } => "pick_step_rows",
            Op::NllPick { .. } => "nll_pick",
            Op::SumAll(..) => "sum_all",
            Op::Dropout { .. } => "dropout",
        }
    }

    /// Node values the backward rule of this op reads: the inputs it needs
    /// plus its own output when the derivative is expressed through it.
    ///
    /// This table is the single definition of "saved for backward"; the
    /// liveness planner derives buffer lifetimes from it and `backward`
    /// reads exactly these values.
    pub fn backward_value_reads(&self, own_id: NodeId) -> Vec<NodeId> {
        match self {
            Op::Matmul(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Sigmoid(_) | Op::Tanh(_) | Op::Exp(_) => vec![own_id],
            Op::SoftmaxRows { .. } | Op::LogSoftmaxRows(_) => vec![own_id],
            Op::AttnScores { query, keys } => {
                let mut v = vec![*query];
                v.extend_from_slice(keys);
                v
            }
            Op::AttnContext { weights, values } => {
                let mut v = vec![*weights];
                v.extend_from_slice(values);
                v
            }
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub op: Op,
    pub shape: Vec<usize>,
}

impl Node {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Append-only operation graph. Node ids are topologically ordered by
/// construction: every input id is smaller than its consumer's id.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id].shape
    }

    fn dims2(&self, id: NodeId) -> TensorResult<(usize, usize)> {
        match self.nodes[id].shape.as_slice() {
            [n] => Ok((1, *n)),
            [r, c] => Ok((*r, *c)),
            s => Err(TensorError::BadShape { what: format!("expected 2-D node, got {s:?}") }),
        }
    }

    fn push(&mut self, op: Op, shape: Vec<usize>) -> NodeId {
        debug_assert!(op.inputs().iter().all(|&i| i < self.nodes.len()));
        self.nodes.push(Node { op, shape });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, shape: &[usize], param: bool) -> NodeId {
        self.push(Op::Leaf { param }, shape.to_vec())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> TensorResult<NodeId> {
        let (m, ka) = self.dims2(a)?;
        let (kb, n) = self.dims2(b)?;
        if ka != kb {
            return Err(TensorError::DimMismatch {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(self.push(Op::Matmul(a, b), vec![m, n]))
    }

    fn binary(&mut self, op: &'static str, a: NodeId, b: NodeId) -> TensorResult<Vec<usize>> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::DimMismatch {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(self.shape(a).to_vec())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> TensorResult<NodeId> {
        let shape = self.binary("add", a, b)?;
        Ok(self.push(Op::Add(a, b), shape))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> TensorResult<NodeId> {
        let shape = self.binary("sub", a, b)?;
        Ok(self.push(Op::Sub(a, b), shape))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> TensorResult<NodeId> {
        let shape = self.binary("mul", a, b)?;
        Ok(self.push(Op::Mul(a, b), shape))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push(Op::Scale(a, c), shape)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push(Op::Sigmoid(a), shape)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push(Op::Tanh(a), shape)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push(Op::Exp(a), shape)
    }

    pub fn add_bias(&mut self, m: NodeId, bias: NodeId) -> TensorResult<NodeId> {
        let (_, c) = self.dims2(m)?;
        if self.nodes[bias].numel() != c {
            return Err(TensorError::DimMismatch {
                op: "add_bias",
                lhs: self.shape(m).to_vec(),
                rhs: self.shape(bias).to_vec(),
            });
        }
        let shape = self.shape(m).to_vec();
        Ok(self.push(Op::AddBias(m, bias), shape))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> TensorResult<NodeId> {
        let (ra, ca) = self.dims2(a)?;
        let (rb, cb) = self.dims2(b)?;
        if ra != rb {
            return Err(TensorError::DimMismatch {
                op: "concat_cols",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(self.push(Op::ConcatCols(a, b), vec![ra, ca + cb]))
    }

    pub fn slice_cols(&mut self, x: NodeId, lo: usize, hi: usize) -> TensorResult<NodeId> {
        let (r, c) = self.dims2(x)?;
        if lo >= hi || hi > c {
            return Err(TensorError::BadShape {
                what: format!("column slice {lo}..{hi} out of range for {c} columns"),
            });
        }
        Ok(self.push(Op::SliceCols { x, lo, hi }, vec![r, hi - lo]))
    }

    pub fn embed_rows(&mut self, table: NodeId, ids: &[u32]) -> TensorResult<NodeId> {
        let (v, d) = self.dims2(table)?;
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= v) {
            return Err(TensorError::Invalid {
                what: format!("embedding id {bad} out of range for vocabulary of {v}"),
            });
        }
        Ok(self.push(Op::EmbedRows { table, ids: ids.to_vec() }, vec![ids.len(), d]))
    }

    pub fn softmax_rows(&mut self, x: NodeId, mask: Option<&[bool]>) -> TensorResult<NodeId> {
        let (r, c) = self.dims2(x)?;
        if let Some(m) = mask {
            if m.len() != r * c {
                return Err(TensorError::BadShape { what: "mask length != node size".into() });
            }
            for i in 0..r {
                if !m[i * c..i * c + c].iter().any(|&b| b) {
                    return Err(TensorError::AllMasked { row: i });
                }
            }
        }
        let shape = self.shape(x).to_vec();
        Ok(self.push(Op::SoftmaxRows { x, mask: mask.map(|m| m.to_vec()) }, shape))
    }

    pub fn log_softmax_rows(&mut self, x: NodeId) -> TensorResult<NodeId> {
        self.dims2(x)?;
        let shape = self.shape(x).to_vec();
        Ok(self.push(Op::LogSoftmaxRows(x), shape))
    }

    pub fn attn_scores(&mut self, query: NodeId, keys: &[NodeId]) -> TensorResult<NodeId> {
        let (r, _) = self.dims2(query)?;
        for &k in keys {
            if self.shape(k) != self.shape(query) {
                return Err(TensorError::DimMismatch {
                    op: "attn_scores",
                    lhs: self.shape(query).to_vec(),
                    rhs: self.shape(k).to_vec(),
                });
            }
        }
        Ok(self.push(Op::AttnScores { query, keys: keys.to_vec() }, vec![r, keys.len()]))
    }

    pub fn attn_context(&mut self, weights: NodeId, values: &[NodeId]) -> TensorResult<NodeId> {
        let (r, s) = self.dims2(weights)?;
        if s != values.len() || values.is_empty() {
            return Err(TensorError::BadShape {
                what: format!("{} weight columns vs {} value nodes", s, values.len()),
            });
        }
        let (rv, h) = self.dims2(values[0])?;
        if rv != r {
            return Err(TensorError::DimMismatch {
                op: "attn_context",
                lhs: self.shape(weights).to_vec(),
                rhs: self.shape(values[0]).to_vec(),
            });
        }
        Ok(self.push(Op::AttnContext { weights, values: values.to_vec() }, vec![r, h]))
    }

    pub fn pick_step_rows(&mut self, steps: &[NodeId], step_of_row: &[usize]) -> TensorResult<NodeId> {
        let first = *steps.first().ok_or_else(|| TensorError::Invalid {
            what: "pick_step_rows on zero steps".into(),
        })?;
        let (r, c) = self.dims2(first)?;
        if step_of_row.len() != r {
            return Err(TensorError::BadShape { what: "step_of_row length != rows".into() });
        }
        if let Some(&bad) = step_of_row.iter().find(|&&s| s >= steps.len()) {
            return Err(TensorError::Invalid { what: format!("step index {bad} out of range") });
        }
        Ok(self.push(
            Op::PickStepRows { steps: steps.to_vec(), step_of_row: step_of_row.to_vec() },
            vec![r, c],
        ))
    }

    pub fn nll_pick(&mut self, logp: NodeId, targets: &[u32], weights: &[f64]) -> TensorResult<NodeId> {
        let (r, c) = self.dims2(logp)?;
        if targets.len() != r || weights.len() != r {
            return Err(TensorError::BadShape {
                what: "targets/weights length != log-prob rows".into(),
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t as usize >= c) {
            return Err(TensorError::Invalid { what: format!("target id {bad} out of range") });
        }
        Ok(self.push(
            Op::NllPick { logp, targets: targets.to_vec(), weights: weights.to_vec() },
            vec![1],
        ))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        self.push(Op::SumAll(x), vec![1])
    }

    pub fn dropout(&mut self, x: NodeId, keep: &[f64]) -> TensorResult<NodeId> {
        if keep.len() != self.nodes[x].numel() {
            return Err(TensorError::BadShape { what: "dropout mask length != node size".into() });
        }
        let shape = self.shape(x).to_vec();
        Ok(self.push(Op::Dropout { x, keep: keep.to_vec() }, shape))
    }
}

/// Leaf values for one execution of a tape.
#[derive(Debug, Default)]
pub struct Bindings {
    values: Vec<Option<Tensor>>,
}

impl Bindings {
    pub fn new() -> Self {
        Bindings { values: Vec::new() }
    }

    pub fn bind(&mut self, tape: &Tape, id: NodeId, value: Tensor) -> TensorResult<()> {
        match tape.nodes()[id].op {
            Op::Leaf { .. } => {}
            _ => return Err(TensorError::Invalid { what: format!("node {id} is not a leaf") }),
        }
        if value.shape() != tape.shape(id) && value.numel() != tape.nodes()[id].numel() {
            return Err(TensorError::BadShape {
                what: format!(
                    "binding shape {:?} != leaf shape {:?}",
                    value.shape(),
                    tape.shape(id)
                ),
            });
        }
        if self.values.len() <= id {
            self.values.resize(id + 1, None);
        }
        self.values[id] = Some(value);
        Ok(())
    }

    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.values.get(id).and_then(|v| v.as_ref())
    }
}

/// Access to node values produced by some execution of a tape.
pub trait ValueSource {
    /// Value of a node; panics if the execution did not retain it.
    fn val(&self, id: NodeId) -> &[f64];
}

/// Named parameter gradients, ordered by name.
#[derive(Debug, Clone, Default)]
pub struct GradientSet {
    grads: BTreeMap<String, Tensor>,
}

impl GradientSet {
    pub fn new() -> Self {
        GradientSet { grads: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, grad: Tensor) {
        self.grads.insert(name.into(), grad);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.grads.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.grads.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn l2_norm(&self) -> f64 {
        let mut acc = 0.0;
        for (_, g) in self.iter() {
            for &v in g.data() {
                acc += v * v;
            }
        }
        acc.sqrt()
    }

    pub fn scale_in_place(&mut self, c: f64) {
        for (_, g) in self.iter_mut() {
            for v in g.data_mut() {
                *v *= c;
            }
        }
    }

    /// self += c * other. Shapes must agree key-for-key.
    pub fn add_scaled(&mut self, other: &GradientSet, c: f64) -> TensorResult<()> {
        for (name, g) in other.iter() {
            match self.grads.get_mut(name) {
                Some(mine) => {
                    if mine.shape() != g.shape() {
                        return Err(TensorError::DimMismatch {
                            op: "grad_add",
                            lhs: mine.shape().to_vec(),
                            rhs: g.shape().to_vec(),
                        });
                    }
                    for (a, &b) in mine.data_mut().iter_mut().zip(g.data()) {
                        *a += c * b;
                    }
                }
                None => {
                    let mut scaled = g.clone();
                    for v in scaled.data_mut() {
                        *v *= c;
                    }
                    self.grads.insert(name.clone(), scaled);
                }
            }
        }
        Ok(())
    }
}

/// Reverse-mode gradients of a scalar loss with respect to named parameter
/// leaves. Parameters the loss never touches come back as zero tensors.
pub fn backward(
    tape: &Tape,
    values: &dyn ValueSource,
    loss: NodeId,
    params: &[(String, NodeId)],
) -> TensorResult<GradientSet> {
    if loss >= tape.len() {
        return Err(TensorError::Invalid { what: format!("loss node {loss} out of range") });
    }
    if tape.nodes()[loss].numel() != 1 {
        return Err(TensorError::Invalid {
            what: format!("loss node must be scalar, got shape {:?}", tape.shape(loss)),
        });
    }
    let mut grads: Vec<Option<Vec<f64>>> = vec![None; tape.len()];
    grads[loss] = Some(vec![1.0]);

    for id in (0..=loss).rev() {
        let g = match grads[id].take() {
            Some(g) => g,
            None => continue,
        };
        let node = &tape.nodes()[id];
        accumulate_node(tape, values, id, node, &g, &mut grads);
        grads[id] = Some(g);
    }

    let mut set = GradientSet::new();
    for (name, &node) in params.iter().map(|(n, id)| (n, id)) {
        let shape = tape.shape(node).to_vec();
        let tensor = match &grads[node] {
            Some(g) => Tensor::new(shape, g.clone())?,
            None => Tensor::zeros(&shape),
        };
        if !tensor.all_finite() {
            return Err(TensorError::NonFinite { op: "backward" });
        }
        set.insert(name.clone(), tensor);
    }
    Ok(set)
}

fn grad_buf<'a>(
    grads: &'a mut [Option<Vec<f64>>],
    tape: &Tape,
    id: NodeId,
) -> &'a mut Vec<f64> {
    if grads[id].is_none() {
        grads[id] = Some(vec![0.0; tape.nodes()[id].numel()]);
    }
    grads[id].as_mut().unwrap()
}

fn accumulate_node(
    tape: &Tape,
    values: &dyn ValueSource,
    id: NodeId,
    node: &Node,
    g: &[f64],
    grads: &mut Vec<Option<Vec<f64>>>,
) {
    use crate::kernels::{matmul_nt_into, matmul_tn_into};
    match &node.op {
        Op::Leaf { .. } => {}
        Op::Matmul(a, b) => {
            let (m, k) = two(tape.shape(*a));
            let n = node.shape[1];
            let av = values.val(*a);
            let bv = values.val(*b);
            let mut da = vec![0.0; m * k];
            matmul_nt_into(g, bv, &mut da, m, n, k);
            add_assign(grad_buf(grads, tape, *a), &da);
            let mut db = vec![0.0; k * n];
            matmul_tn_into(av, g, &mut db, m, k, n);
            add_assign(grad_buf(grads, tape, *b), &db);
        }
        Op::Add(a, b) => {
            add_assign(grad_buf(grads, tape, *a), g);
            add_assign(grad_buf(grads, tape, *b), g);
        }
        Op::Sub(a, b) => {
            add_assign(grad_buf(grads, tape, *a), g);
            sub_assign(grad_buf(grads, tape, *b), g);
        }
        Op::Mul(a, b) => {
            let av = values.val(*a).to_vec();
            let bv = values.val(*b).to_vec();
            let da = grad_buf(grads, tape, *a);
            for ((d, &gv), &bvv) in da.iter_mut().zip(g).zip(&bv) {
                *d += gv * bvv;
            }
            let db = grad_buf(grads, tape, *b);
            for ((d, &gv), &avv) in db.iter_mut().zip(g).zip(&av) {
                *d += gv * avv;
            }
        }
        Op::Scale(a, c) => {
            let da = grad_buf(grads, tape, *a);
            for (d, &gv) in da.iter_mut().zip(g) {
                *d += c * gv;
            }
        }
        Op::Sigmoid(a) => {
            let y = values.val(id).to_vec();
            let da = grad_buf(grads, tape, *a);
            for ((d, &gv), &yv) in da.iter_mut().zip(g).zip(&y) {
                *d += gv * yv * (1.0 - yv);
            }
        }
        Op::Tanh(a) => {
            let y = values.val(id).to_vec();
            let da = grad_buf(grads, tape, *a);
            for ((d, &gv), &yv) in da.iter_mut().zip(g).zip(&y) {
                *d += gv * (1.0 - yv * yv);
            }
        }
        Op::Exp(a) => {
            let y = values.val(id).to_vec();
            let da = grad_buf(grads, tape, *a);
            for ((d, &gv), &yv) in da.iter_mut().zip(g).zip(&y) {
                *d += gv * yv;
            }
        }
        Op::AddBias(m, b) => {
            let (rows, cols) = two(&node.shape);
            add_assign(grad_buf(grads, tape, *m), g);
            let db = grad_buf(grads, tape, *b);
            for i in 0..rows {
                for j in 0..cols {
                    db[j] += g[i * cols + j];
                }
            }
        }
        Op::ConcatCols(a, b) => {
            let (rows, _) = two(&node.shape);
            let ca = tape.shape(*a)[tape.shape(*a).len() - 1];
            let cb = tape.shape(*b)[tape.shape(*b).len() - 1];
            let c = ca + cb;
            {
                let da = grad_buf(grads, tape, *a);
                for i in 0..rows {
                    for j in 0..ca {
                        da[i * ca + j] += g[i * c + j];
                    }
                }
            }
            let db = grad_buf(grads, tape, *b);
            for i in 0..rows {
                for j in 0..cb {
                    db[i * cb + j] += g[i * c + ca + j];
                }
            }
        }
        Op::SliceCols { x, lo, hi } => {
            let (rows, w) = two(&node.shape);
            let cols = tape.shape(*x)[1];
            let dx = grad_buf(grads, tape, *x);
            for i in 0..rows {
                for j in 0..w {
                    dx[i * cols + lo + j] += g[i * w + j];
                }
            }
            let _ = hi;
        }
        Op::EmbedRows { table, ids } => {
            let dim = node.shape[1];
            let dt = grad_buf(grads, tape, *table);
            for (i, &idx) in ids.iter().enumerate() {
                let dst = &mut dt[idx as usize * dim..(idx as usize + 1) * dim];
                for (d, &gv) in dst.iter_mut().zip(&g[i * dim..i * dim + dim]) {
                    *d += gv;
                }
            }
        }
        Op::SoftmaxRows { x, .. } => {
            let (rows, cols) = two(&node.shape);
            let y = values.val(id).to_vec();
            let dx = grad_buf(grads, tape, *x);
            for i in 0..rows {
                let yr = &y[i * cols..i * cols + cols];
                let gr = &g[i * cols..i * cols + cols];
                let mut dot = 0.0;
                for (yv, gv) in yr.iter().zip(gr) {
                    dot += yv * gv;
                }
                let dr = &mut dx[i * cols..i * cols + cols];
                for ((d, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                    *d += yv * (gv - dot);
                }
            }
        }
        Op::LogSoftmaxRows(x) => {
            let (rows, cols) = two(&node.shape);
            let y = values.val(id).to_vec();
            let dx = grad_buf(grads, tape, *x);
            for i in 0..rows {
                let yr = &y[i * cols..i * cols + cols];
                let gr = &g[i * cols..i * cols + cols];
                let s: f64 = gr.iter().sum();
                let dr = &mut dx[i * cols..i * cols + cols];
                for ((d, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                    *d += gv - yv.exp() * s;
                }
            }
        }
        Op::AttnScores { query, keys } => {
            let (rows, s_len) = two(&node.shape);
            let h = tape.shape(*query)[1];
            let qv = values.val(*query).to_vec();
            for (s, &key) in keys.iter().enumerate() {
                let kv = values.val(key).to_vec();
                {
                    let dq = grad_buf(grads, tape, *query);
                    for i in 0..rows {
                        let gv = g[i * s_len + s];
                        for j in 0..h {
                            dq[i * h + j] += gv * kv[i * h + j];
                        }
                    }
                }
                let dk = grad_buf(grads, tape, key);
                for i in 0..rows {
                    let gv = g[i * s_len + s];
                    for j in 0..h {
                        dk[i * h + j] += gv * qv[i * h + j];
                    }
                }
            }
        }
        Op::AttnContext { weights, values: vals } => {
            let (rows, h) = two(&node.shape);
            let s_len = vals.len();
            let wv = values.val(*weights).to_vec();
            for (s, &val) in vals.iter().enumerate() {
                let vv = values.val(val).to_vec();
                {
                    let dw = grad_buf(grads, tape, *weights);
                    for i in 0..rows {
                        let mut acc = 0.0;
                        for j in 0..h {
                            acc += g[i * h + j] * vv[i * h + j];
                        }
                        dw[i * s_len + s] += acc;
                    }
                }
                let dv = grad_buf(grads, tape, val);
                for i in 0..rows {
                    let w = wv[i * s_len + s];
                    for j in 0..h {
                        dv[i * h + j] += w * g[i * h + j];
                    }
                }
            }
        }
        Op::PickStepRows { steps, step_of_row } => {
            let (_, cols) = two(&node.shape);
            for (i, &s) in step_of_row.iter().enumerate() {
                let ds = grad_buf(grads, tape, steps[s]);
                for j in 0..cols {
                    ds[i * cols + j] += g[i * cols + j];
                }
            }
        }
        Op::NllPick { logp, targets, weights } => {
            let cols = tape.shape(*logp)[1];
            let dl = grad_buf(grads, tape, *logp);
            for (i, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                dl[i * cols + t as usize] -= w * g[0];
            }
        }
        Op::SumAll(x) => {
            let dx = grad_buf(grads, tape, *x);
            for d in dx.iter_mut() {
                *d += g[0];
            }
        }
        Op::Dropout { x, keep } => {
            let dx = grad_buf(grads, tape, *x);
            for ((d, &gv), &kv) in dx.iter_mut().zip(g).zip(keep) {
                *d += gv * kv;
            }
        }
    }
}

fn two(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n] => (1, *n),
        [r, c] => (*r, *c),
        _ => panic!("expected 2-D shape, got {shape:?}"),
    }
}

fn add_assign(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn sub_assign(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d -= s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{plan_buffer_sharing, run_naive, run_with_plan};

    #[test]
    fn backward_of_sum_of_squares() {
        // loss = sum(x * x), x = [1,2,3] -> grad 2x
        let mut tape = Tape::new();
        let x = tape.leaf(&[3], true);
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum_all(sq);
        let mut b = Bindings::new();
        b.bind(&tape, x, Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let exec = run_naive(&tape, &b).unwrap();
        let grads = backward(&tape, &exec, loss, &[("x".into(), x)]).unwrap();
        assert_eq!(grads.get("x").unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let mut tape = Tape::new();
        let w = tape.leaf(&[2, 2], true);
        let x = tape.leaf(&[2, 1], false);
        let v = tape.leaf(&[3, 3], true); // never used
        let y = tape.matmul(w, x).unwrap();
        let loss = tape.sum_all(y);
        let mut b = Bindings::new();
        b.bind(&tape, w, Tensor::full(&[2, 2], 1.0)).unwrap();
        b.bind(&tape, x, Tensor::full(&[2, 1], 2.0)).unwrap();
        b.bind(&tape, v, Tensor::full(&[3, 3], 7.0)).unwrap();
        let exec = run_naive(&tape, &b).unwrap();
        let grads =
            backward(&tape, &exec, loss, &[("w".into(), w), ("v".into(), v)]).unwrap();
        assert!(grads.get("v").unwrap().data().iter().all(|&g| g == 0.0));
        assert_eq!(grads.get("w").unwrap().data(), &[2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(&[3], true);
        let y = tape.sigmoid(x);
        let mut b = Bindings::new();
        b.bind(&tape, x, Tensor::zeros(&[3])).unwrap();
        let exec = run_naive(&tape, &b).unwrap();
        assert!(backward(&tape, &exec, y, &[("x".into(), x)]).is_err());
    }

    #[test]
    fn planned_execution_supports_backward() {
        let mut tape = Tape::new();
        let x = tape.leaf(&[4], true);
        let s = tape.sigmoid(x);
        let t = tape.tanh(s);
        let sq = tape.mul(t, t).unwrap();
        let loss = tape.sum_all(sq);
        let mut b = Bindings::new();
        b.bind(&tape, x, Tensor::new(vec![4], vec![-1.0, 0.0, 0.5, 2.0]).unwrap()).unwrap();

        let naive = run_naive(&tape, &b).unwrap();
        let g1 = backward(&tape, &naive, loss, &[("x".into(), x)]).unwrap();

        let plan = plan_buffer_sharing(&tape, &[loss]);
        let planned = run_with_plan(&tape, &plan, &b).unwrap();
        assert_eq!(planned.val(loss), naive.val(loss));
        let g2 = backward(&tape, &planned, loss, &[("x".into(), x)]).unwrap();
        assert_eq!(g1.get("x").unwrap().data(), g2.get("x").unwrap().data());
    }
}
