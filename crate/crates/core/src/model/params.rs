//! Named parameter tensors for the encoder-decoder.
//!
//! Gate weights are packed per layer: `wx [d_in, G*H]`, `wh [H, G*H]`,
//! `b [G*H]` with gate blocks in i,f,o,g order for LSTM and z,r,n for GRU.

use std::collections::BTreeMap;

use minnmt_tensor::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{AttentionKind, ModelConfig};
use crate::error::{ModelError, ModelResult};

#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub wx: Tensor,
    pub wh: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub src_emb: Tensor,
    pub tgt_emb: Tensor,
    pub src_factor_emb: Vec<Tensor>,
    pub tgt_factor_emb: Vec<Tensor>,
    pub enc_layers: Vec<CellParams>,
    pub dec_layers: Vec<CellParams>,
    /// Attention projection, present in `general` scoring mode only.
    pub attn_wa: Option<Tensor>,
    /// Projection of [context; hidden] to the attentional hidden vector.
    pub attn_wc: Tensor,
    pub gen_w: Tensor,
    pub gen_b: Tensor,
    /// One affine head per factor.
    pub factor_gen: Vec<(Tensor, Tensor)>,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel).map(|_| rng.gen_range(-0.1..0.1)).collect();
    Tensor::new(shape.to_vec(), data).expect("positive dims")
}

impl ModelParams {
    /// Fresh parameters, uniform in [-0.1, 0.1] from the given seed.
    pub fn init(
        config: &ModelConfig,
        src_vocab_size: usize,
        tgt_vocab_size: usize,
        seed: u64,
    ) -> ModelResult<Self> {
        config.validate()?;
        if src_vocab_size == 0 || tgt_vocab_size == 0 {
            return Err(ModelError::Config { what: "empty vocabulary".into() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.rnn_size;
        let g = config.cell.gates();

        let src_emb = uniform(&mut rng, &[src_vocab_size, config.embedding_dim]);
        let tgt_emb = uniform(&mut rng, &[tgt_vocab_size, config.embedding_dim]);
        let src_factor_emb: Vec<Tensor> = config
            .factors
            .iter()
            .map(|f| uniform(&mut rng, &[f.vocab_size, f.emb_dim]))
            .collect();
        let tgt_factor_emb: Vec<Tensor> = config
            .factors
            .iter()
            .map(|f| uniform(&mut rng, &[f.vocab_size, f.emb_dim]))
            .collect();

        let cell = |rng: &mut ChaCha8Rng, d_in: usize| CellParams {
            wx: uniform(rng, &[d_in, g * h]),
            wh: uniform(rng, &[h, g * h]),
            b: uniform(rng, &[g * h]),
        };
        let enc_layers: Vec<CellParams> = (0..config.num_layers)
            .map(|k| cell(&mut rng, config.encoder_input_dim(k)))
            .collect();
        let dec_layers: Vec<CellParams> = (0..config.num_layers)
            .map(|k| cell(&mut rng, config.decoder_input_dim(k)))
            .collect();

        let attn_wa = match config.attention {
            AttentionKind::General => Some(uniform(&mut rng, &[h, h])),
            AttentionKind::Dot => None,
        };
        let attn_wc = uniform(&mut rng, &[2 * h, h]);
        let gen_w = uniform(&mut rng, &[h, tgt_vocab_size]);
        let gen_b = uniform(&mut rng, &[tgt_vocab_size]);
        let factor_gen: Vec<(Tensor, Tensor)> = config
            .factors
            .iter()
            .map(|f| (uniform(&mut rng, &[h, f.vocab_size]), uniform(&mut rng, &[f.vocab_size])))
            .collect();

        Ok(ModelParams {
            src_emb,
            tgt_emb,
            src_factor_emb,
            tgt_factor_emb,
            enc_layers,
            dec_layers,
            attn_wa,
            attn_wc,
            gen_w,
            gen_b,
            factor_gen,
        })
    }

    /// All-zero parameters with the same shapes (uniform output
    /// distributions; handy for closed-form tests).
    pub fn zeros_like(other: &ModelParams) -> ModelParams {
        let mut out = other.clone();
        out.visit_mut(|_, t| {
            for v in t.data_mut() {
                *v = 0.0;
            }
        });
        out
    }

    pub fn src_vocab_size(&self) -> usize {
        self.src_emb.shape()[0]
    }

    pub fn tgt_vocab_size(&self) -> usize {
        self.tgt_emb.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(|_, t| n += t.numel());
        n
    }

    /// Visit every parameter in canonical name order.
    pub fn visit<F: FnMut(&str, &Tensor)>(&self, mut f: F) {
        f("src_emb", &self.src_emb);
        f("tgt_emb", &self.tgt_emb);
        for (i, t) in self.src_factor_emb.iter().enumerate() {
            f(&format!("src_factor{i}_emb"), t);
        }
        for (i, t) in self.tgt_factor_emb.iter().enumerate() {
            f(&format!("tgt_factor{i}_emb"), t);
        }
        for (k, c) in self.enc_layers.iter().enumerate() {
            f(&format!("enc_l{k}_wx"), &c.wx);
            f(&format!("enc_l{k}_wh"), &c.wh);
            f(&format!("enc_l{k}_b"), &c.b);
        }
        for (k, c) in self.dec_layers.iter().enumerate() {
            f(&format!("dec_l{k}_wx"), &c.wx);
            f(&format!("dec_l{k}_wh"), &c.wh);
            f(&format!("dec_l{k}_b"), &c.b);
        }
        if let Some(wa) = &self.attn_wa {
            f("attn_wa", wa);
        }
        f("attn_wc", &self.attn_wc);
        f("gen_w", &self.gen_w);
        f("gen_b", &self.gen_b);
        for (i, (w, b)) in self.factor_gen.iter().enumerate() {
            f(&format!("gen_f{i}_w"), w);
            f(&format!("gen_f{i}_b"), b);
        }
    }

    pub fn visit_mut<F: FnMut(&str, &mut Tensor)>(&mut self, mut f: F) {
        f("src_emb", &mut self.src_emb);
        f("tgt_emb", &mut self.tgt_emb);
        for (i, t) in self.src_factor_emb.iter_mut().enumerate() {
            f(&format!("src_factor{i}_emb"), t);
        }
        for (i, t) in self.tgt_factor_emb.iter_mut().enumerate() {
            f(&format!("tgt_factor{i}_emb"), t);
        }
        for (k, c) in self.enc_layers.iter_mut().enumerate() {
            f(&format!("enc_l{k}_wx"), &mut c.wx);
            f(&format!("enc_l{k}_wh"), &mut c.wh);
            f(&format!("enc_l{k}_b"), &mut c.b);
        }
        for (k, c) in self.dec_layers.iter_mut().enumerate() {
            f(&format!("dec_l{k}_wx"), &mut c.wx);
            f(&format!("dec_l{k}_wh"), &mut c.wh);
            f(&format!("dec_l{k}_b"), &mut c.b);
        }
        if let Some(wa) = &mut self.attn_wa {
            f("attn_wa", wa);
        }
        f("attn_wc", &mut self.attn_wc);
        f("gen_w", &mut self.gen_w);
        f("gen_b", &mut self.gen_b);
        for (i, (w, b)) in self.factor_gen.iter_mut().enumerate() {
            f(&format!("gen_f{i}_w"), w);
            f(&format!("gen_f{i}_b"), b);
        }
    }

    pub fn to_named(&self) -> BTreeMap<String, Tensor> {
        let mut map = BTreeMap::new();
        self.visit(|name, t| {
            map.insert(name.to_string(), t.clone());
        });
        map
    }

    /// Rebuild from named tensors; every expected name must be present with
    /// the right shape.
    pub fn from_named(
        config: &ModelConfig,
        src_vocab_size: usize,
        tgt_vocab_size: usize,
        mut named: BTreeMap<String, Tensor>,
    ) -> ModelResult<Self> {
        let mut template = ModelParams::init(config, src_vocab_size, tgt_vocab_size, 0)?;
        let mut missing = Vec::new();
        template.visit_mut(|name, t| match named.remove(name) {
            Some(loaded) if loaded.shape() == t.shape() => *t = loaded,
            Some(loaded) => missing.push(format!(
                "{name}: shape {:?} does not match expected {:?}",
                loaded.shape(),
                t.shape()
            )),
            None => missing.push(format!("{name}: missing")),
        });
        if !missing.is_empty() {
            return Err(ModelError::Invalid {
                what: format!("parameter mismatch: {}", missing.join("; ")),
            });
        }
        if !named.is_empty() {
            let extra: Vec<String> = named.keys().cloned().collect();
            return Err(ModelError::Invalid {
                what: format!("unexpected parameters: {}", extra.join(", ")),
            });
        }
        Ok(template)
    }
}
