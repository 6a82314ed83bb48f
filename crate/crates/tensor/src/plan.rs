//! Liveness-based buffer sharing for recorded tapes.
//!
//! Every non-leaf node owns one output buffer. A buffer is live from its
//! creation node to its last read; reads include the backward pass, so
//! buffers some backward rule needs stay live to the end. Buffers with
//! disjoint live ranges may share an arena slot, assigned first-fit in
//! topological order. Executing a planned tape is bit-identical to running
//! it with a private buffer per node: only the memory placement changes.

use crate::error::{TensorError, TensorResult};
use crate::kernels;
use crate::tape::{Bindings, NodeId, Op, Tape, ValueSource};
use crate::tensor::Tensor;

const LIVE_FOREVER: usize = usize::MAX;

/// Totals for one tape, in bytes of f64 activation storage. Parameter and
/// input (leaf) memory is excluded from both sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArenaStats {
    pub naive_bytes: usize,
    pub shared_bytes: usize,
}

#[derive(Debug, Clone)]
pub struct SharingPlan {
    /// Node id -> arena slot id; `None` for leaves.
    pub assignment: Vec<Option<usize>>,
    /// Slot id -> element count.
    pub arena_slot_sizes: Vec<usize>,
    /// Nodes whose slot still holds their value once execution finishes
    /// (saved activations and requested outputs).
    pub retained: Vec<bool>,
    pub stats: ArenaStats,
}

/// Compute buffer lifetimes and pack disjoint ones into shared slots.
/// `keep` lists nodes whose values the caller will read after execution
/// (typically the loss); they are retained like saved activations.
pub fn plan_buffer_sharing(tape: &Tape, keep: &[NodeId]) -> SharingPlan {
    let n = tape.len();
    let mut needed = vec![false; n];
    for &k in keep {
        needed[k] = true;
    }
    let mut last_use = (0..n).collect::<Vec<usize>>();
    for (id, node) in tape.nodes().iter().enumerate() {
        for input in node.op.inputs() {
            last_use[input] = last_use[input].max(id);
        }
        for read in node.op.backward_value_reads(id) {
            needed[read] = true;
        }
    }

    struct Slot {
        size: usize,
        intervals: Vec<(usize, usize)>,
    }
    let overlaps = |slot: &Slot, start: usize, end: usize| {
        slot.intervals.iter().any(|&(s, e)| start <= e && s <= end)
    };

    let mut slots: Vec<Slot> = Vec::new();
    let mut assignment: Vec<Option<usize>> = vec![None; n];
    let mut naive = 0usize;
    for (id, node) in tape.nodes().iter().enumerate() {
        if matches!(node.op, Op::Leaf { .. }) {
            continue;
        }
        let size = node.numel();
        naive += size;
        let start = id;
        let end = if needed[id] { LIVE_FOREVER } else { last_use[id] };

        let mut chosen = slots
            .iter()
            .position(|s| s.size >= size && !overlaps(s, start, end));
        if chosen.is_none() {
            chosen = slots.iter().position(|s| !overlaps(s, start, end));
        }
        let slot = match chosen {
            Some(i) => {
                slots[i].size = slots[i].size.max(size);
                i
            }
            None => {
                slots.push(Slot { size, intervals: Vec::new() });
                slots.len() - 1
            }
        };
        slots[slot].intervals.push((start, end));
        assignment[id] = Some(slot);
    }

    let arena_slot_sizes: Vec<usize> = slots.iter().map(|s| s.size).collect();
    let shared: usize = arena_slot_sizes.iter().sum();
    SharingPlan {
        assignment,
        arena_slot_sizes,
        retained: needed,
        stats: ArenaStats { naive_bytes: naive * 8, shared_bytes: shared * 8 },
    }
}

fn leaf_val<'a>(bindings: &'a Bindings, id: NodeId) -> TensorResult<&'a [f64]> {
    bindings
        .get(id)
        .map(|t| t.data())
        .ok_or_else(|| TensorError::Invalid { what: format!("leaf node {id} is unbound") })
}

/// Execute one node into `out` given its input values. All executors funnel
/// through this so their outputs agree bit-for-bit.
fn exec_kernel(tape: &Tape, id: NodeId, ins: &[&[f64]], out: &mut [f64]) -> TensorResult<()> {
    let node = &tape.nodes()[id];
    let dims2 = |s: &[usize]| -> (usize, usize) {
        match s {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            _ => panic!("expected 2-D shape"),
        }
    };
    match &node.op {
        Op::Leaf { .. } => unreachable!("leaves are not executed"),
        Op::Matmul(a, _) => {
            let (m, k) = dims2(tape.shape(*a));
            let n = node.shape[1];
            kernels::matmul_into(ins[0], ins[1], out, m, k, n);
        }
        Op::Add(..) => kernels::add_into(ins[0], ins[1], out),
        Op::Sub(..) => kernels::sub_into(ins[0], ins[1], out),
        Op::Mul(..) => kernels::mul_into(ins[0], ins[1], out),
        Op::Scale(_, c) => kernels::scale_into(ins[0], *c, out),
        Op::Sigmoid(..) => kernels::sigmoid_into(ins[0], out),
        Op::Tanh(..) => kernels::tanh_into(ins[0], out),
        Op::Exp(..) => kernels::exp_into(ins[0], out),
        Op::AddBias(..) => {
            let (r, c) = dims2(&node.shape);
            kernels::add_bias_into(ins[0], ins[1], out, r, c);
        }
        Op::ConcatCols(a, b) => {
            let (r, _) = dims2(&node.shape);
            let ca = *tape.shape(*a).last().unwrap();
            let cb = *tape.shape(*b).last().unwrap();
            kernels::concat_cols_into(ins[0], ins[1], out, r, ca, cb);
        }
        Op::SliceCols { x, lo, hi } => {
            let (r, c) = dims2(tape.shape(*x));
            kernels::slice_cols_into(ins[0], out, r, c, *lo, *hi);
        }
        Op::EmbedRows { ids, .. } => {
            kernels::embed_rows_into(ins[0], ids, out, node.shape[1]);
        }
        Op::SoftmaxRows { mask, .. } => {
            let (r, c) = dims2(&node.shape);
            kernels::softmax_rows_into(ins[0], mask.as_deref(), out, r, c)?;
        }
        Op::LogSoftmaxRows(..) => {
            let (r, c) = dims2(&node.shape);
            kernels::log_softmax_rows_into(ins[0], out, r, c);
        }
        Op::AttnScores { .. } => {
            let (r, _) = dims2(&node.shape);
            let h = ins[1].len() / r;
            kernels::attn_scores_into(ins[0], &ins[1..], out, r, h);
        }
        Op::AttnContext { .. } => {
            let (r, h) = dims2(&node.shape);
            kernels::attn_context_into(ins[0], &ins[1..], out, r, h);
        }
        Op::PickStepRows { step_of_row, .. } => {
            let (_, c) = dims2(&node.shape);
            kernels::pick_step_rows_into(ins, step_of_row, out, c);
        }
        Op::NllPick { logp, targets, weights } => {
            let (_, c) = dims2(tape.shape(*logp));
            kernels::nll_pick_into(ins[0], targets, weights, out, c);
        }
        Op::SumAll(..) => kernels::sum_all_into(ins[0], out),
        Op::Dropout { keep, .. } => kernels::mul_into(ins[0], keep, out),
    }
    kernels::check_finite(node.op.name(), out)
}

/// Execution with one private buffer per node; keeps every value.
pub struct NaiveExec<'a> {
    tape: &'a Tape,
    bindings: &'a Bindings,
    values: Vec<Option<Vec<f64>>>,
}

impl<'a> NaiveExec<'a> {
    pub fn value_tensor(&self, id: NodeId) -> Tensor {
        Tensor::new(self.tape.shape(id).to_vec(), self.val(id).to_vec())
            .expect("executed node has consistent shape")
    }
}

impl<'a> ValueSource for NaiveExec<'a> {
    fn val(&self, id: NodeId) -> &[f64] {
        if let Op::Leaf { .. } = self.tape.nodes()[id].op {
            return leaf_val(self.bindings, id).expect("leaf bound");
        }
        self.values[id].as_deref().expect("node executed")
    }
}

pub fn run_naive<'a>(tape: &'a Tape, bindings: &'a Bindings) -> TensorResult<NaiveExec<'a>> {
    let mut values: Vec<Option<Vec<f64>>> = vec![None; tape.len()];
    for (id, node) in tape.nodes().iter().enumerate() {
        if let Op::Leaf { .. } = node.op {
            leaf_val(bindings, id)?;
            continue;
        }
        let ins: Vec<&[f64]> = node
            .op
            .inputs()
            .iter()
            .map(|&i| match tape.nodes()[i].op {
                Op::Leaf { .. } => leaf_val(bindings, i).expect("checked above"),
                _ => values[i].as_deref().expect("topological order"),
            })
            .collect();
        let mut out = vec![0.0; node.numel()];
        exec_kernel(tape, id, &ins, &mut out)?;
        values[id] = Some(out);
    }
    Ok(NaiveExec { tape, bindings, values })
}

/// Execution into the shared arena described by a `SharingPlan`. Values of
/// retained nodes (saved activations, requested outputs) remain readable;
/// everything else may have been overwritten by a later node.
pub struct PlannedExec<'a> {
    tape: &'a Tape,
    bindings: &'a Bindings,
    plan: &'a SharingPlan,
    arena: Vec<Vec<f64>>,
}

impl<'a> PlannedExec<'a> {
    pub fn value_tensor(&self, id: NodeId) -> Tensor {
        Tensor::new(self.tape.shape(id).to_vec(), self.val(id).to_vec())
            .expect("executed node has consistent shape")
    }
}

impl<'a> ValueSource for PlannedExec<'a> {
    fn val(&self, id: NodeId) -> &[f64] {
        if let Op::Leaf { .. } = self.tape.nodes()[id].op {
            return leaf_val(self.bindings, id).expect("leaf bound");
        }
        assert!(
            self.plan.retained[id],
            "node {id} ({}) was not retained by the sharing plan",
            self.tape.nodes()[id].op.name()
        );
        let slot = self.plan.assignment[id].expect("non-leaf has a slot");
        &self.arena[slot][..self.tape.nodes()[id].numel()]
    }
}

pub fn run_with_plan<'a>(
    tape: &'a Tape,
    plan: &'a SharingPlan,
    bindings: &'a Bindings,
) -> TensorResult<PlannedExec<'a>> {
    if plan.assignment.len() != tape.len() || plan.retained.len() != tape.len() {
        return Err(TensorError::Invalid {
            what: format!(
                "plan covers {} nodes but tape has {}",
                plan.assignment.len(),
                tape.len()
            ),
        });
    }
    let mut arena: Vec<Vec<f64>> = plan
        .arena_slot_sizes
        .iter()
        .map(|&s| vec![0.0; s])
        .collect();
    for (id, node) in tape.nodes().iter().enumerate() {
        if let Op::Leaf { .. } = node.op {
            leaf_val(bindings, id)?;
            continue;
        }
        let out_slot = plan.assignment[id].ok_or_else(|| TensorError::Invalid {
            what: format!("plan assigns no slot to node {id}"),
        })?;
        if plan.arena_slot_sizes[out_slot] < node.numel() {
            return Err(TensorError::Invalid {
                what: format!("slot {out_slot} too small for node {id}"),
            });
        }
        let mut buf = std::mem::take(&mut arena[out_slot]);
        {
            let ins: Vec<&[f64]> = node
                .op
                .inputs()
                .iter()
                .map(|&i| match tape.nodes()[i].op {
                    Op::Leaf { .. } => leaf_val(bindings, i).expect("checked above"),
                    _ => {
                        let slot = plan.assignment[i].expect("non-leaf has a slot");
                        debug_assert_ne!(slot, out_slot, "input and output share a slot");
                        &arena[slot][..tape.nodes()[i].numel()]
                    }
                })
                .collect();
            exec_kernel(tape, id, &ins, &mut buf[..node.numel()])?;
        }
        arena[out_slot] = buf;
    }
    Ok(PlannedExec { tape, bindings, plan, arena })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_tape_gives_empty_plan() {
        let tape = Tape::new();
        let plan = plan_buffer_sharing(&tape, &[]);
        assert!(plan.assignment.is_empty());
        assert!(plan.arena_slot_sizes.is_empty());
        assert_eq!(plan.stats.naive_bytes, 0);
        assert_eq!(plan.stats.shared_bytes, 0);
    }

    #[test]
    fn unary_chain_needs_at_most_two_slots() {
        // scale's backward reads nothing, so intermediates die immediately.
        let mut tape = Tape::new();
        let x = tape.leaf(&[8], false);
        let mut cur = x;
        for _ in 0..10 {
            cur = tape.scale(cur, 0.5);
        }
        let plan = plan_buffer_sharing(&tape, &[cur]);
        assert!(
            plan.arena_slot_sizes.len() <= 2,
            "expected <= 2 slots, got {}",
            plan.arena_slot_sizes.len()
        );
    }

    #[test]
    fn fan_out_buffer_shares_with_neither_consumer() {
        let mut tape = Tape::new();
        let x = tape.leaf(&[4], false);
        let a = tape.scale(x, 2.0); // consumed twice
        let b = tape.scale(a, 3.0);
        let c = tape.scale(a, 4.0);
        let plan = plan_buffer_sharing(&tape, &[b, c]);
        let sa = plan.assignment[a].unwrap();
        assert_ne!(sa, plan.assignment[b].unwrap());
        assert_ne!(sa, plan.assignment[c].unwrap());
    }

    #[test]
    fn identity_plan_reproduces_naive_outputs() {
        let mut tape = Tape::new();
        let x = tape.leaf(&[3], false);
        let a = tape.sigmoid(x);
        let b = tape.tanh(a);
        let loss = tape.sum_all(b);
        let mut bind = Bindings::new();
        bind.bind(&tape, x, Tensor::new(vec![3], vec![0.3, -1.2, 4.0]).unwrap()).unwrap();

        // one private slot per node, everything retained
        let mut assignment = vec![None; tape.len()];
        let mut sizes = Vec::new();
        for (id, node) in tape.nodes().iter().enumerate() {
            if !matches!(node.op, Op::Leaf { .. }) {
                assignment[id] = Some(sizes.len());
                sizes.push(node.numel());
            }
        }
        let identity = SharingPlan {
            assignment,
            arena_slot_sizes: sizes,
            retained: vec![true; tape.len()],
            stats: ArenaStats { naive_bytes: 0, shared_bytes: 0 },
        };

        let naive = run_naive(&tape, &bind).unwrap();
        let planned = run_with_plan(&tape, &identity, &bind).unwrap();
        for id in [a, b, loss] {
            assert_eq!(naive.val(id), planned.val(id));
        }
    }

    #[test]
    fn mismatched_plan_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(&[3], false);
        let _ = tape.sigmoid(x);
        let other = plan_buffer_sharing(&Tape::new(), &[]);
        let mut bind = Bindings::new();
        bind.bind(&tape, x, Tensor::zeros(&[3])).unwrap();
        assert!(run_with_plan(&tape, &other, &bind).is_err());
    }
}
