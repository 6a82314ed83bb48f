//! Shared helpers: random tape generation and the finite-difference oracle.

use minnmt_tensor::{backward, run_naive, Bindings, NodeId, Tape, Tensor, ValueSource};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub struct RandomGraph {
    pub tape: Tape,
    pub bindings: Bindings,
    pub params: Vec<(String, NodeId)>,
    pub loss: NodeId,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel).map(|_| rng.gen_range(-2.0..2.0)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Build a random differentiable graph mixing every op kind, ending in a
/// scalar loss.
pub fn random_graph(seed: u64) -> RandomGraph {
    let mut rng = rng(seed);
    let mut tape = Tape::new();
    let mut bindings = Bindings::new();
    let mut params: Vec<(String, NodeId)> = Vec::new();

    let rows = rng.gen_range(1..4usize);
    let cols = rng.gen_range(1..5usize);
    let mut new_param = |tape: &mut Tape,
                         bindings: &mut Bindings,
                         params: &mut Vec<(String, NodeId)>,
                         rng: &mut ChaCha8Rng,
                         shape: &[usize]| {
        let id = tape.leaf(shape, true);
        bindings.bind(tape, id, rand_tensor(rng, shape)).unwrap();
        params.push((format!("p{}", params.len()), id));
        id
    };

    let mut pool: Vec<NodeId> = Vec::new();
    for _ in 0..2 {
        pool.push(new_param(&mut tape, &mut bindings, &mut params, &mut rng, &[rows, cols]));
    }

    let n_ops = rng.gen_range(6..16usize);
    for _ in 0..n_ops {
        let pick = *pool.choose(&mut rng).unwrap();
        let pick_shape = tape.shape(pick).to_vec();
        let same: Vec<NodeId> = pool
            .iter()
            .copied()
            .filter(|&n| tape.shape(n) == pick_shape.as_slice())
            .collect();
        let node = match rng.gen_range(0..12u32) {
            0 => tape.scale(pick, rng.gen_range(-1.5..1.5)),
            1 => tape.sigmoid(pick),
            2 => tape.tanh(pick),
            3 => {
                let damp = tape.scale(pick, 0.2);
                tape.exp(damp)
            }
            4 if same.len() >= 2 => tape.add(same[0], same[1]).unwrap(),
            5 if same.len() >= 2 => tape.sub(same[0], same[1]).unwrap(),
            6 if same.len() >= 2 => tape.mul(same[0], same[1]).unwrap(),
            7 => {
                let (r, c) = (pick_shape[0], pick_shape[1]);
                let w = new_param(&mut tape, &mut bindings, &mut params, &mut rng, &[c, r.max(2)]);
                tape.matmul(pick, w).unwrap()
            }
            8 => {
                let c = pick_shape[1];
                let b = new_param(&mut tape, &mut bindings, &mut params, &mut rng, &[c]);
                tape.add_bias(pick, b).unwrap()
            }
            9 => tape.log_softmax_rows(pick).unwrap(),
            10 => tape.softmax_rows(pick, None).unwrap(),
            11 if same.len() >= 2 => tape.concat_cols(same[0], same[1]).unwrap(),
            _ => tape.tanh(pick),
        };
        pool.push(node);
    }
    let last = *pool.last().unwrap();
    let loss = tape.sum_all(last);
    RandomGraph { tape, bindings, params, loss }
}

/// Central finite differences with epsilon 1e-5 against the analytic
/// gradients; per-element tolerance is relative with an absolute floor for
/// elements near the finite-difference noise.
pub fn fd_check(g: &mut RandomGraph, tol: f64, abs_floor: f64) {
    let eps = 1e-5;
    let exec = run_naive(&g.tape, &g.bindings).unwrap();
    let grads = backward(&g.tape, &exec, g.loss, &g.params).unwrap();
    drop(exec);

    let params = g.params.clone();
    for (name, node) in &params {
        let base = g.bindings.get(*node).unwrap().clone();
        let analytic = grads.get(name).unwrap().clone();
        for i in 0..base.numel() {
            let mut plus = base.clone();
            plus.data_mut()[i] += eps;
            g.bindings.bind(&g.tape, *node, plus).unwrap();
            let f_plus = run_naive(&g.tape, &g.bindings).unwrap().val(g.loss)[0];

            let mut minus = base.clone();
            minus.data_mut()[i] -= eps;
            g.bindings.bind(&g.tape, *node, minus).unwrap();
            let f_minus = run_naive(&g.tape, &g.bindings).unwrap().val(g.loss)[0];

            g.bindings.bind(&g.tape, *node, base.clone()).unwrap();

            let numeric = (f_plus - f_minus) / (2.0 * eps);
            let a = analytic.data()[i];
            let denom = a.abs().max(numeric.abs()).max(1.0);
            let rel = (a - numeric).abs() / denom;
            assert!(
                rel < tol || (a - numeric).abs() < abs_floor,
                "{name}[{i}]: analytic {a} vs fd {numeric} (rel {rel:.3e})"
            );
        }
    }
}
