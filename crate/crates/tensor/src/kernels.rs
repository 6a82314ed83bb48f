//! Eager tensor kernels.
//!
//! Every kernel has a raw `*_into` form writing into a caller-provided
//! buffer (used by the plan executor so shared-arena runs are bit-identical
//! to private-buffer runs) and a checked wrapper that allocates the output
//! and rejects non-finite values.

use crate::error::{TensorError, TensorResult};
use crate::tensor::Tensor;

#[inline]
fn finish(op: &'static str, shape: Vec<usize>, data: Vec<f64>) -> TensorResult<Tensor> {
    check_finite(op, &data)?;
    Ok(Tensor::new(shape, data).expect("kernel produced inconsistent shape"))
}

pub fn check_finite(op: &'static str, data: &[f64]) -> TensorResult<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

fn want_eq(op: &'static str, a: &Tensor, b: &Tensor) -> TensorResult<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::DimMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

// ---- matrix product -------------------------------------------------------

/// out[m,n] = a[m,k] * b[k,n]. Fully overwrites `out`.
///
/// Rows are independent scalar accumulation chains in ascending k order, so
/// a given input row yields bit-identical output no matter how many other
/// rows are in the call. Blocks of 8 rows share each loaded row of `b`.
pub fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    out[..m * n].fill(0.0);
    let mut i = 0;
    while i + 8 <= m {
        let (o0, rest) = out[i * n..(i + 8) * n].split_at_mut(n);
        let (o1, rest) = rest.split_at_mut(n);
        let (o2, rest) = rest.split_at_mut(n);
        let (o3, rest) = rest.split_at_mut(n);
        let (o4, rest) = rest.split_at_mut(n);
        let (o5, rest) = rest.split_at_mut(n);
        let (o6, o7) = rest.split_at_mut(n);
        for kk in 0..k {
            let b_row = &b[kk * n..kk * n + n];
            let a0 = a[i * k + kk];
            let a1 = a[(i + 1) * k + kk];
            let a2 = a[(i + 2) * k + kk];
            let a3 = a[(i + 3) * k + kk];
            let a4 = a[(i + 4) * k + kk];
            let a5 = a[(i + 5) * k + kk];
            let a6 = a[(i + 6) * k + kk];
            let a7 = a[(i + 7) * k + kk];
            for j in 0..n {
                let bv = b_row[j];
                o0[j] += a0 * bv;
                o1[j] += a1 * bv;
                o2[j] += a2 * bv;
                o3[j] += a3 * bv;
                o4[j] += a4 * bv;
                o5[j] += a5 * bv;
                o6[j] += a6 * bv;
                o7[j] += a7 * bv;
            }
        }
        i += 8;
    }
    while i < m {
        let out_row = &mut out[i * n..i * n + n];
        let a_row = &a[i * k..i * k + k];
        for (kk, &av) in a_row.iter().enumerate() {
            let b_row = &b[kk * n..kk * n + n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
        i += 1;
    }
}

/// out[m,k] = g[m,n] * transpose(b[k,n]). Used for matmul input gradients.
pub fn matmul_nt_into(g: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let g_row = &g[i * n..i * n + n];
        let out_row = &mut out[i * k..i * k + k];
        for l in 0..k {
            let b_row = &b[l * n..l * n + n];
            let mut acc = 0.0;
            for (gv, bv) in g_row.iter().zip(b_row) {
                acc += gv * bv;
            }
            out_row[l] = acc;
        }
    }
}

/// out[k,n] = transpose(a[m,k]) * g[m,n]. Used for matmul weight gradients.
pub fn matmul_tn_into(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    out[..k * n].fill(0.0);
    for i in 0..m {
        let g_row = &g[i * n..i * n + n];
        for l in 0..k {
            let av = a[i * k + l];
            let out_row = &mut out[l * n..l * n + n];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o += av * gv;
            }
        }
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> TensorResult<Tensor> {
    let (m, ka) = a.dims2()?;
    let (kb, n) = b.dims2()?;
    if ka != kb {
        return Err(TensorError::DimMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut out = vec![0.0; m * n];
    matmul_into(a.data(), b.data(), &mut out, m, ka, n);
    finish("matmul", vec![m, n], out)
}

// ---- pointwise ------------------------------------------------------------

pub fn add_into(a: &[f64], b: &[f64], out: &mut [f64]) {
    for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
        *o = x + y;
    }
}

pub fn sub_into(a: &[f64], b: &[f64], out: &mut [f64]) {
    for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
        *o = x - y;
    }
}

pub fn mul_into(a: &[f64], b: &[f64], out: &mut [f64]) {
    for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
        *o = x * y;
    }
}

pub fn scale_into(a: &[f64], c: f64, out: &mut [f64]) {
    for (o, &x) in out.iter_mut().zip(a) {
        *o = x * c;
    }
}

pub fn sigmoid_into(a: &[f64], out: &mut [f64]) {
    for (o, &x) in out.iter_mut().zip(a) {
        *o = 1.0 / (1.0 + (-x).exp());
    }
}

pub fn tanh_into(a: &[f64], out: &mut [f64]) {
    for (o, &x) in out.iter_mut().zip(a) {
        *o = x.tanh();
    }
}

pub fn exp_into(a: &[f64], out: &mut [f64]) {
    for (o, &x) in out.iter_mut().zip(a) {
        *o = x.exp();
    }
}

pub fn add(a: &Tensor, b: &Tensor) -> TensorResult<Tensor> {
    want_eq("add", a, b)?;
    let mut out = vec![0.0; a.numel()];
    add_into(a.data(), b.data(), &mut out);
    finish("add", a.shape().to_vec(), out)
}

pub fn sub(a: &Tensor, b: &Tensor) -> TensorResult<Tensor> {
    want_eq("sub", a, b)?;
    let mut out = vec![0.0; a.numel()];
    sub_into(a.data(), b.data(), &mut out);
    finish("sub", a.shape().to_vec(), out)
}

pub fn mul(a: &Tensor, b: &Tensor) -> TensorResult<Tensor> {
    want_eq("mul", a, b)?;
    let mut out = vec![0.0; a.numel()];
    mul_into(a.data(), b.data(), &mut out);
    finish("mul", a.shape().to_vec(), out)
}

pub fn scale(a: &Tensor, c: f64) -> TensorResult<Tensor> {
    let mut out = vec![0.0; a.numel()];
    scale_into(a.data(), c, &mut out);
    finish("scale", a.shape().to_vec(), out)
}

pub fn sigmoid(a: &Tensor) -> TensorResult<Tensor> {
    let mut out = vec![0.0; a.numel()];
    sigmoid_into(a.data(), &mut out);
    finish("sigmoid", a.shape().to_vec(), out)
}

pub fn tanh(a: &Tensor) -> TensorResult<Tensor> {
    let mut out = vec![0.0; a.numel()];
    tanh_into(a.data(), &mut out);
    finish("tanh", a.shape().to_vec(), out)
}

pub fn exp(a: &Tensor) -> TensorResult<Tensor> {
    let mut out = vec![0.0; a.numel()];
    exp_into(a.data(), &mut out);
    finish("exp", a.shape().to_vec(), out)
}

/// Elementwise multiply by a raw coefficient slice (dropout keep-masks).
pub fn mul_mask(a: &Tensor, mask: &[f64]) -> TensorResult<Tensor> {
    if mask.len() != a.numel() {
        return Err(TensorError::BadShape { what: "mask length != tensor size".into() });
    }
    let mut out = vec![0.0; a.numel()];
    mul_into(a.data(), mask, &mut out);
    finish("mul_mask", a.shape().to_vec(), out)
}

// ---- rows, bias, concatenation --------------------------------------------

pub fn add_bias_into(m_data: &[f64], bias: &[f64], out: &mut [f64], rows: usize, cols: usize) {
    for i in 0..rows {
        let src = &m_data[i * cols..i * cols + cols];
        let dst = &mut out[i * cols..i * cols + cols];
        for ((o, &x), &b) in dst.iter_mut().zip(src).zip(bias) {
            *o = x + b;
        }
    }
}

pub fn add_bias(m: &Tensor, bias: &Tensor) -> TensorResult<Tensor> {
    let (r, c) = m.dims2()?;
    if bias.numel() != c {
        return Err(TensorError::DimMismatch {
            op: "add_bias",
            lhs: m.shape().to_vec(),
            rhs: bias.shape().to_vec(),
        });
    }
    let mut out = vec![0.0; r * c];
    add_bias_into(m.data(), bias.data(), &mut out, r, c);
    finish("add_bias", m.shape().to_vec(), out)
}

pub fn concat_cols_into(
    a: &[f64],
    b: &[f64],
    out: &mut [f64],
    rows: usize,
    ca: usize,
    cb: usize,
) {
    let c = ca + cb;
    for i in 0..rows {
        out[i * c..i * c + ca].copy_from_slice(&a[i * ca..i * ca + ca]);
        out[i * c + ca..i * c + c].copy_from_slice(&b[i * cb..i * cb + cb]);
    }
}

pub fn concat_cols(a: &Tensor, b: &Tensor) -> TensorResult<Tensor> {
    let (ra, ca) = a.dims2()?;
    let (rb, cb) = b.dims2()?;
    if ra != rb {
        return Err(TensorError::DimMismatch {
            op: "concat_cols",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut out = vec![0.0; ra * (ca + cb)];
    concat_cols_into(a.data(), b.data(), &mut out, ra, ca, cb);
    finish("concat_cols", vec![ra, ca + cb], out)
}

pub fn slice_cols_into(x: &[f64], out: &mut [f64], rows: usize, cols: usize, lo: usize, hi: usize) {
    let w = hi - lo;
    for i in 0..rows {
        out[i * w..i * w + w].copy_from_slice(&x[i * cols + lo..i * cols + hi]);
    }
}

pub fn slice_cols(x: &Tensor, lo: usize, hi: usize) -> TensorResult<Tensor> {
    let (r, c) = x.dims2()?;
    if lo >= hi || hi > c {
        return Err(TensorError::BadShape {
            what: format!("column slice {lo}..{hi} out of range for {c} columns"),
        });
    }
    let mut out = vec![0.0; r * (hi - lo)];
    slice_cols_into(x.data(), &mut out, r, c, lo, hi);
    finish("slice_cols", vec![r, hi - lo], out)
}

pub fn embed_rows_into(table: &[f64], ids: &[u32], out: &mut [f64], dim: usize) {
    for (i, &id) in ids.iter().enumerate() {
        let src = &table[id as usize * dim..(id as usize + 1) * dim];
        out[i * dim..i * dim + dim].copy_from_slice(src);
    }
}

pub fn embed_rows(table: &Tensor, ids: &[u32]) -> TensorResult<Tensor> {
    let (v, d) = table.dims2()?;
    if let Some(&bad) = ids.iter().find(|&&id| id as usize >= v) {
        return Err(TensorError::Invalid {
            what: format!("embedding id {bad} out of range for vocabulary of {v}"),
        });
    }
    let mut out = vec![0.0; ids.len() * d];
    embed_rows_into(table.data(), ids, &mut out, d);
    finish("embed_rows", vec![ids.len(), d], out)
}

/// out.row(i) = steps[step_of_row[i]].row(i); extracts per-row states at
/// per-row time steps (decoder initialization from variable-length sources).
pub fn pick_step_rows_into(
    steps: &[&[f64]],
    step_of_row: &[usize],
    out: &mut [f64],
    cols: usize,
) {
    for (i, &s) in step_of_row.iter().enumerate() {
        out[i * cols..i * cols + cols].copy_from_slice(&steps[s][i * cols..i * cols + cols]);
    }
}

pub fn pick_step_rows(steps: &[&Tensor], step_of_row: &[usize]) -> TensorResult<Tensor> {
    let first = steps.first().ok_or_else(|| TensorError::Invalid {
        what: "pick_step_rows on zero steps".into(),
    })?;
    let (r, c) = first.dims2()?;
    if step_of_row.len() != r {
        return Err(TensorError::BadShape { what: "step_of_row length != rows".into() });
    }
    if let Some(&bad) = step_of_row.iter().find(|&&s| s >= steps.len()) {
        return Err(TensorError::Invalid { what: format!("step index {bad} out of range") });
    }
    let datas: Vec<&[f64]> = steps.iter().map(|t| t.data()).collect();
    let mut out = vec![0.0; r * c];
    pick_step_rows_into(&datas, step_of_row, &mut out, c);
    finish("pick_step_rows", vec![r, c], out)
}

// ---- softmax family --------------------------------------------------------

/// Row-wise softmax with optional boolean keep-mask (true = position active).
/// Masked positions are exactly 0.0 in the output; stabilized by subtracting
/// the row max over active positions.
pub fn softmax_rows_into(
    x: &[f64],
    mask: Option<&[bool]>,
    out: &mut [f64],
    rows: usize,
    cols: usize,
) -> TensorResult<()> {
    for i in 0..rows {
        let row = &x[i * cols..i * cols + cols];
        let mrow = mask.map(|m| &m[i * cols..i * cols + cols]);
        let active = |j: usize| mrow.map_or(true, |m| m[j]);
        let mut max = f64::NEG_INFINITY;
        for j in 0..cols {
            if active(j) && row[j] > max {
                max = row[j];
            }
        }
        if max == f64::NEG_INFINITY {
            return Err(TensorError::AllMasked { row: i });
        }
        let orow = &mut out[i * cols..i * cols + cols];
        let mut sum = 0.0;
        for j in 0..cols {
            if active(j) {
                let e = (row[j] - max).exp();
                orow[j] = e;
                sum += e;
            } else {
                orow[j] = 0.0;
            }
        }
        for o in orow.iter_mut() {
            *o /= sum;
        }
    }
    Ok(())
}

pub fn softmax_rows(x: &Tensor, mask: Option<&[bool]>) -> TensorResult<Tensor> {
    let (r, c) = x.dims2()?;
    if let Some(m) = mask {
        if m.len() != r * c {
            return Err(TensorError::BadShape { what: "mask length != tensor size".into() });
        }
    }
    let mut out = vec![0.0; r * c];
    softmax_rows_into(x.data(), mask, &mut out, r, c)?;
    finish("softmax_rows", x.shape().to_vec(), out)
}

/// 1-D masked softmax.
pub fn softmax(x: &Tensor, mask: Option<&[bool]>) -> TensorResult<Tensor> {
    let (r, c) = x.dims2()?;
    if r != 1 {
        return Err(TensorError::BadShape { what: "softmax expects a 1-D tensor".into() });
    }
    let mut out = vec![0.0; c];
    softmax_rows_into(x.data(), mask, &mut out, 1, c)?;
    finish("softmax", x.shape().to_vec(), out)
}

pub fn log_softmax_rows_into(x: &[f64], out: &mut [f64], rows: usize, cols: usize) {
    for i in 0..rows {
        let row = &x[i * cols..i * cols + cols];
        let orow = &mut out[i * cols..i * cols + cols];
        let mut max = f64::NEG_INFINITY;
        for &v in row {
            if v > max {
                max = v;
            }
        }
        let mut sum = 0.0;
        for &v in row {
            sum += (v - max).exp();
        }
        let lse = sum.ln();
        for (o, &v) in orow.iter_mut().zip(row) {
            *o = v - max - lse;
        }
    }
}

pub fn log_softmax_rows(x: &Tensor) -> TensorResult<Tensor> {
    let (r, c) = x.dims2()?;
    let mut out = vec![0.0; r * c];
    log_softmax_rows_into(x.data(), &mut out, r, c);
    finish("log_softmax_rows", x.shape().to_vec(), out)
}

// ---- attention -------------------------------------------------------------

/// out[i,s] = dot(query.row(i), keys[s].row(i)).
pub fn attn_scores_into(q: &[f64], keys: &[&[f64]], out: &mut [f64], rows: usize, h: usize) {
    let s_len = keys.len();
    for i in 0..rows {
        let q_row = &q[i * h..i * h + h];
        for (s, key) in keys.iter().enumerate() {
            let k_row = &key[i * h..i * h + h];
            let mut acc = 0.0;
            for (qv, kv) in q_row.iter().zip(k_row) {
                acc += qv * kv;
            }
            out[i * s_len + s] = acc;
        }
    }
}

pub fn attn_scores(q: &Tensor, keys: &[&Tensor]) -> TensorResult<Tensor> {
    let (r, h) = q.dims2()?;
    for key in keys {
        if key.shape() != q.shape() {
            return Err(TensorError::DimMismatch {
                op: "attn_scores",
                lhs: q.shape().to_vec(),
                rhs: key.shape().to_vec(),
            });
        }
    }
    let datas: Vec<&[f64]> = keys.iter().map(|t| t.data()).collect();
    let mut out = vec![0.0; r * keys.len()];
    attn_scores_into(q.data(), &datas, &mut out, r, h);
    finish("attn_scores", vec![r, keys.len()], out)
}

/// out.row(i) = sum_s weights[i,s] * values[s].row(i).
pub fn attn_context_into(w: &[f64], values: &[&[f64]], out: &mut [f64], rows: usize, h: usize) {
    let s_len = values.len();
    out[..rows * h].fill(0.0);
    for i in 0..rows {
        let orow = &mut out[i * h..i * h + h];
        for (s, val) in values.iter().enumerate() {
            let wv = w[i * s_len + s];
            let v_row = &val[i * h..i * h + h];
            for (o, &v) in orow.iter_mut().zip(v_row) {
                *o += wv * v;
            }
        }
    }
}

pub fn attn_context(w: &Tensor, values: &[&Tensor]) -> TensorResult<Tensor> {
    let (r, s) = w.dims2()?;
    if s != values.len() {
        return Err(TensorError::BadShape {
            what: format!("{} weights columns vs {} value tensors", s, values.len()),
        });
    }
    let (rv, h) = values[0].dims2()?;
    if rv != r {
        return Err(TensorError::DimMismatch {
            op: "attn_context",
            lhs: w.shape().to_vec(),
            rhs: values[0].shape().to_vec(),
        });
    }
    let datas: Vec<&[f64]> = values.iter().map(|t| t.data()).collect();
    let mut out = vec![0.0; r * h];
    attn_context_into(w.data(), &datas, &mut out, r, h);
    finish("attn_context", vec![r, h], out)
}

// ---- reductions ------------------------------------------------------------

pub fn sum_all_into(x: &[f64], out: &mut [f64]) {
    let mut acc = 0.0;
    for &v in x {
        acc += v;
    }
    out[0] = acc;
}

pub fn sum_all(x: &Tensor) -> TensorResult<Tensor> {
    let mut out = vec![0.0];
    sum_all_into(x.data(), &mut out);
    finish("sum_all", vec![1], out)
}

/// Negative log-likelihood picker: out = -sum_i weights[i] * logp[i, targets[i]].
pub fn nll_pick_into(
    logp: &[f64],
    targets: &[u32],
    weights: &[f64],
    out: &mut [f64],
    cols: usize,
) {
    let mut acc = 0.0;
    for (i, (&t, &w)) in targets.iter().zip(weights).enumerate() {
        acc += w * logp[i * cols + t as usize];
    }
    out[0] = -acc;
}

pub fn nll_pick(logp: &Tensor, targets: &[u32], weights: &[f64]) -> TensorResult<Tensor> {
    let (r, c) = logp.dims2()?;
    if targets.len() != r || weights.len() != r {
        return Err(TensorError::BadShape {
            what: "targets/weights length != log-prob rows".into(),
        });
    }
    if let Some(&bad) = targets.iter().find(|&&t| t as usize >= c) {
        return Err(TensorError::Invalid { what: format!("target id {bad} out of range") });
    }
    let mut out = vec![0.0];
    nll_pick_into(logp.data(), targets, weights, &mut out, c);
    finish("nll_pick", vec![1], out)
}
