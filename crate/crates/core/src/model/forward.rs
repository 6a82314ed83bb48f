//! Attention-based encoder-decoder forward pass, written once against the
//! [`Engine`] abstraction. Training records it on a tape; inference runs it
//! eagerly. Either way it goes through the same kernels, so both paths
//! produce bit-identical values.

use minnmt_tensor::{Engine, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::{CellKind, ModelConfig};
use super::params::ModelParams;
use crate::error::{ModelError, ModelResult};
use crate::textpipe::{Batch, IdMat};

#[derive(Clone)]
pub struct CellView<V> {
    pub wx: V,
    pub wh: V,
    pub b: V,
}

/// Engine-side handles to every model parameter.
#[derive(Clone)]
pub struct ParamsView<V> {
    pub src_emb: V,
    pub tgt_emb: V,
    pub src_factor_emb: Vec<V>,
    pub tgt_factor_emb: Vec<V>,
    pub enc: Vec<CellView<V>>,
    pub dec: Vec<CellView<V>>,
    pub attn_wa: Option<V>,
    pub attn_wc: V,
    pub gen_w: V,
    pub gen_b: V,
    pub factor_gen: Vec<(V, V)>,
}

pub fn register_params<E: Engine>(e: &mut E, p: &ModelParams) -> ParamsView<E::V> {
    let cell = |e: &mut E, prefix: &str, k: usize, c: &super::params::CellParams| CellView {
        wx: e.param(&format!("{prefix}_l{k}_wx"), &c.wx),
        wh: e.param(&format!("{prefix}_l{k}_wh"), &c.wh),
        b: e.param(&format!("{prefix}_l{k}_b"), &c.b),
    };
    ParamsView {
        src_emb: e.param("src_emb", &p.src_emb),
        tgt_emb: e.param("tgt_emb", &p.tgt_emb),
        src_factor_emb: p
            .src_factor_emb
            .iter()
            .enumerate()
            .map(|(i, t)| e.param(&format!("src_factor{i}_emb"), t))
            .collect(),
        tgt_factor_emb: p
            .tgt_factor_emb
            .iter()
            .enumerate()
            .map(|(i, t)| e.param(&format!("tgt_factor{i}_emb"), t))
            .collect(),
        enc: p.enc_layers.iter().enumerate().map(|(k, c)| cell(e, "enc", k, c)).collect(),
        dec: p.dec_layers.iter().enumerate().map(|(k, c)| cell(e, "dec", k, c)).collect(),
        attn_wa: p.attn_wa.as_ref().map(|t| e.param("attn_wa", t)),
        attn_wc: e.param("attn_wc", &p.attn_wc),
        gen_w: e.param("gen_w", &p.gen_w),
        gen_b: e.param("gen_b", &p.gen_b),
        factor_gen: p
            .factor_gen
            .iter()
            .enumerate()
            .map(|(i, (w, b))| {
                (e.param(&format!("gen_f{i}_w"), w), e.param(&format!("gen_f{i}_b"), b))
            })
            .collect(),
    }
}

/// Encoder output: top-layer states per source step plus per-layer states
/// taken at each row's last real step, for decoder initialization.
pub struct EncodedView<V> {
    pub top: Vec<V>,
    pub init_h: Vec<V>,
    pub init_c: Vec<V>,
    pub mask: Vec<bool>,
    pub rows: usize,
}

/// Recurrent decoder state: per-layer hidden (and cell) states plus the
/// input-feed vector, zeros before the first step.
pub struct StateView<V> {
    pub h: Vec<V>,
    pub c: Vec<V>,
    pub feed: Option<V>,
}

pub struct StepOut<V> {
    pub log_probs: V,
    pub factor_log_probs: Vec<V>,
    /// Attention weights over source positions, [rows, S].
    pub attn: V,
    pub state: StateView<V>,
}

/// Dropout source for training runs; inference passes `None`.
pub struct DropoutCtx<'r> {
    pub rng: &'r mut ChaCha8Rng,
    pub rate: f64,
}

fn apply_dropout<E: Engine>(
    e: &mut E,
    x: &E::V,
    numel: usize,
    dropout: &mut Option<DropoutCtx>,
) -> ModelResult<E::V> {
    if let Some(ctx) = dropout.as_mut() {
        if ctx.rate > 0.0 {
            let keep_scale = 1.0 / (1.0 - ctx.rate);
            let mask: Vec<f64> = (0..numel)
                .map(|_| if ctx.rng.gen::<f64>() < ctx.rate { 0.0 } else { keep_scale })
                .collect();
            return Ok(e.dropout(x, &mask)?);
        }
    }
    Ok(x.clone())
}

/// One gated-cell step on packed weights. LSTM: i,f,o = sigmoid, g = tanh,
/// c' = f.c + i.g, h' = o.tanh(c'). GRU: z,r = sigmoid, n = tanh(xWn +
/// (r.h)Un + bn), h' = (1-z).h + z.n.
pub fn cell_step<E: Engine>(
    e: &mut E,
    kind: CellKind,
    cell: &CellView<E::V>,
    h_size: usize,
    x: &E::V,
    h: &E::V,
    c: Option<&E::V>,
) -> ModelResult<(E::V, Option<E::V>)> {
    match kind {
        CellKind::Lstm => {
            let xw = e.matmul(x, &cell.wx)?;
            let hw = e.matmul(h, &cell.wh)?;
            let s = e.add(&xw, &hw)?;
            let pre = e.add_bias(&s, &cell.b)?;
            let sl = e.slice_cols(&pre, 0, h_size)?;
            let i = e.sigmoid(&sl)?;
            let sl = e.slice_cols(&pre, h_size, 2 * h_size)?;
            let f = e.sigmoid(&sl)?;
            let sl = e.slice_cols(&pre, 2 * h_size, 3 * h_size)?;
            let o = e.sigmoid(&sl)?;
            let sl = e.slice_cols(&pre, 3 * h_size, 4 * h_size)?;
            let g = e.tanh(&sl)?;
            let c_prev = c.ok_or_else(|| ModelError::Invalid {
                what: "lstm step without cell state".into(),
            })?;
            let fc = e.mul(&f, c_prev)?;
            let ig = e.mul(&i, &g)?;
            let c_new = e.add(&fc, &ig)?;
            let tc = e.tanh(&c_new)?;
            let h_new = e.mul(&o, &tc)?;
            Ok((h_new, Some(c_new)))
        }
        CellKind::Gru => {
            let xw0 = e.matmul(x, &cell.wx)?;
            let xw = e.add_bias(&xw0, &cell.b)?;
            let hw = e.matmul(h, &cell.wh)?;
            let xz = e.slice_cols(&xw, 0, h_size)?;
            let hz = e.slice_cols(&hw, 0, h_size)?;
            let sz = e.add(&xz, &hz)?;
            let z = e.sigmoid(&sz)?;
            let xr = e.slice_cols(&xw, h_size, 2 * h_size)?;
            let hr = e.slice_cols(&hw, h_size, 2 * h_size)?;
            let sr = e.add(&xr, &hr)?;
            let r = e.sigmoid(&sr)?;
            let hn = e.slice_cols(&hw, 2 * h_size, 3 * h_size)?;
            let rh = e.mul(&r, &hn)?;
            let xn = e.slice_cols(&xw, 2 * h_size, 3 * h_size)?;
            let sn = e.add(&xn, &rh)?;
            let n = e.tanh(&sn)?;
            // h' = (1-z).h + z.n, computed as h + z.(n-h)
            let nh = e.sub(&n, h)?;
            let zd = e.mul(&z, &nh)?;
            let h_new = e.add(h, &zd)?;
            Ok((h_new, None))
        }
    }
}

fn token_repr<E: Engine>(
    e: &mut E,
    emb: &E::V,
    factor_embs: &[E::V],
    ids: &[u32],
    factor_ids: &[Vec<u32>],
) -> ModelResult<E::V> {
    if factor_embs.len() != factor_ids.len() {
        return Err(ModelError::Invalid {
            what: format!(
                "model has {} factors but input carries {}",
                factor_embs.len(),
                factor_ids.len()
            ),
        });
    }
    let mut x = e.embed(emb, ids)?;
    for (femb, fids) in factor_embs.iter().zip(factor_ids) {
        let fx = e.embed(femb, fids)?;
        x = e.concat_cols(&x, &fx)?;
    }
    Ok(x)
}

/// Run the stacked encoder left to right over a padded id matrix.
pub fn encode<E: Engine>(
    e: &mut E,
    pv: &ParamsView<E::V>,
    cfg: &ModelConfig,
    src: &IdMat,
    src_lens: &[usize],
    src_factors: &[IdMat],
    mask: &[bool],
    dropout: &mut Option<DropoutCtx>,
) -> ModelResult<EncodedView<E::V>> {
    let rows = src.rows;
    let h_size = cfg.rnn_size;
    let layers = cfg.num_layers;
    let is_lstm = cfg.cell == CellKind::Lstm;
    if src.cols == 0 || src_lens.iter().any(|&l| l == 0 || l > src.cols) {
        return Err(ModelError::Invalid { what: "encoder needs non-empty sources".into() });
    }

    let zero = Tensor::zeros(&[rows, h_size]);
    let mut h: Vec<E::V> = (0..layers).map(|_| e.constant(&zero)).collect();
    let mut c: Vec<E::V> =
        if is_lstm { (0..layers).map(|_| e.constant(&zero)).collect() } else { Vec::new() };
    let mut h_steps: Vec<Vec<E::V>> = vec![Vec::with_capacity(src.cols); layers];
    let mut c_steps: Vec<Vec<E::V>> = vec![Vec::with_capacity(src.cols); layers];

    for s in 0..src.cols {
        let ids = src.column(s);
        let fids: Vec<Vec<u32>> = src_factors.iter().map(|m| m.column(s)).collect();
        let mut x = token_repr(e, &pv.src_emb, &pv.src_factor_emb, &ids, &fids)?;
        for k in 0..layers {
            if k > 0 {
                x = apply_dropout(e, &x, rows * h_size, dropout)?;
            }
            let (h_new, c_new) =
                cell_step(e, cfg.cell, &pv.enc[k], h_size, &x, &h[k], c.get(k))?;
            h[k] = h_new;
            if let Some(cn) = c_new {
                c[k] = cn;
                c_steps[k].push(c[k].clone());
            }
            h_steps[k].push(h[k].clone());
            x = h[k].clone();
        }
    }

    let last_step: Vec<usize> = src_lens.iter().map(|&l| l - 1).collect();
    let mut init_h = Vec::with_capacity(layers);
    let mut init_c = Vec::with_capacity(layers);
    for k in 0..layers {
        init_h.push(e.pick_step_rows(&h_steps[k], &last_step)?);
        if is_lstm {
            init_c.push(e.pick_step_rows(&c_steps[k], &last_step)?);
        }
    }

    Ok(EncodedView {
        top: h_steps.pop().expect("at least one layer"),
        init_h,
        init_c,
        mask: mask.to_vec(),
        rows,
    })
}

/// Decoder start state: encoder final states per layer, zero input feed.
pub fn init_state<E: Engine>(
    e: &mut E,
    cfg: &ModelConfig,
    enc: &EncodedView<E::V>,
) -> StateView<E::V> {
    let feed = cfg
        .input_feed
        .then(|| e.constant(&Tensor::zeros(&[enc.rows, cfg.rnn_size])));
    StateView { h: enc.init_h.clone(), c: enc.init_c.clone(), feed }
}

/// One teacher-forced or search step: embed previous tokens, run the stacked
/// cells, attend over the encoder, and map the attentional hidden vector to
/// next-token log-probabilities (word head plus one head per factor).
pub fn decode_step<E: Engine>(
    e: &mut E,
    pv: &ParamsView<E::V>,
    cfg: &ModelConfig,
    enc: &EncodedView<E::V>,
    state: &StateView<E::V>,
    prev_ids: &[u32],
    prev_factor_ids: &[Vec<u32>],
    dropout: &mut Option<DropoutCtx>,
) -> ModelResult<StepOut<E::V>> {
    let h_size = cfg.rnn_size;
    let rows = prev_ids.len();
    let mut x = token_repr(e, &pv.tgt_emb, &pv.tgt_factor_emb, prev_ids, prev_factor_ids)?;
    if cfg.input_feed {
        let feed = state.feed.as_ref().ok_or_else(|| ModelError::Invalid {
            what: "input feeding enabled but state has no feed vector".into(),
        })?;
        x = e.concat_cols(&x, feed)?;
    }

    let mut new_h = Vec::with_capacity(cfg.num_layers);
    let mut new_c = Vec::new();
    for k in 0..cfg.num_layers {
        if k > 0 {
            x = apply_dropout(e, &x, rows * h_size, dropout)?;
        }
        let (hn, cn) = cell_step(e, cfg.cell, &pv.dec[k], h_size, &x, &state.h[k], state.c.get(k))?;
        x = hn.clone();
        new_h.push(hn);
        if let Some(cn) = cn {
            new_c.push(cn);
        }
    }
    let h_top = new_h.last().expect("at least one layer").clone();

    let query = match &pv.attn_wa {
        Some(wa) => e.matmul(&h_top, wa)?,
        None => h_top.clone(),
    };
    let scores = e.attn_scores(&query, &enc.top)?;
    let weights = e.softmax_rows(&scores, Some(&enc.mask))?;
    let ctx = e.attn_context(&weights, &enc.top)?;
    let cat = e.concat_cols(&ctx, &h_top)?;
    let pre = e.matmul(&cat, &pv.attn_wc)?;
    let hhat = e.tanh(&pre)?;

    let logits0 = e.matmul(&hhat, &pv.gen_w)?;
    let logits = e.add_bias(&logits0, &pv.gen_b)?;
    let log_probs = e.log_softmax_rows(&logits)?;

    let mut factor_log_probs = Vec::with_capacity(pv.factor_gen.len());
    for (w, b) in &pv.factor_gen {
        let l0 = e.matmul(&hhat, w)?;
        let l = e.add_bias(&l0, b)?;
        factor_log_probs.push(e.log_softmax_rows(&l)?);
    }

    let feed = cfg.input_feed.then(|| hhat.clone());
    Ok(StepOut {
        log_probs,
        factor_log_probs,
        attn: weights,
        state: StateView { h: new_h, c: new_c, feed },
    })
}

/// Teacher-forced negative log-likelihood of a batch, averaged over target
/// tokens (content plus EOS; padding contributes exactly zero). Factored
/// targets add their heads' NLL.
pub fn forward_nll<E: Engine>(
    e: &mut E,
    pv: &ParamsView<E::V>,
    cfg: &ModelConfig,
    batch: &Batch,
    dropout: &mut Option<DropoutCtx>,
) -> ModelResult<(E::V, usize)> {
    let mask = batch.src_mask();
    let enc = encode(
        e,
        pv,
        cfg,
        &batch.src,
        &batch.src_lens,
        &batch.src_factors,
        &mask,
        dropout,
    )?;
    let mut state = init_state(e, cfg, &enc);

    let mut total: Option<E::V> = None;
    for t in 1..batch.tgt.cols {
        let prev = batch.tgt.column(t - 1);
        let prev_f: Vec<Vec<u32>> =
            batch.tgt_factors.iter().map(|m| m.column(t - 1)).collect();
        let out = decode_step(e, pv, cfg, &enc, &state, &prev, &prev_f, dropout)?;

        let targets = batch.tgt.column(t);
        let weights: Vec<f64> = batch
            .tgt_lens
            .iter()
            .map(|&n| if t <= n + 1 { 1.0 } else { 0.0 })
            .collect();
        let mut term = e.nll_pick(&out.log_probs, &targets, &weights)?;
        for (j, flp) in out.factor_log_probs.iter().enumerate() {
            let ftargets = batch.tgt_factors[j].column(t);
            let fterm = e.nll_pick(flp, &ftargets, &weights)?;
            term = e.add(&term, &fterm)?;
        }
        total = Some(match total {
            Some(acc) => e.add(&acc, &term)?,
            None => term,
        });
        state = out.state;
    }

    let tokens = batch.target_tokens();
    let loss = e.scale(&total.expect("targets always include EOS"), 1.0 / tokens as f64)?;
    Ok((loss, tokens))
}
