//! Length-bucketed batch assembly.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::vocab::{BOS, EOS, PAD};
use crate::error::{TextError, TextResult};

/// Row-major id matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u32>,
}

impl IdMat {
    pub fn filled(rows: usize, cols: usize, value: u32) -> Self {
        IdMat { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn get(&self, r: usize, c: usize) -> u32 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: u32) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<u32> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn slice_rows(&self, lo: usize, hi: usize) -> IdMat {
        IdMat {
            rows: hi - lo,
            cols: self.cols,
            data: self.data[lo * self.cols..hi * self.cols].to_vec(),
        }
    }
}

/// One aligned sentence pair as ids, without specials; factor sequences are
/// per-factor and aligned token-for-token with their side.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairIds {
    pub src: Vec<u32>,
    pub tgt: Vec<u32>,
    pub src_factors: Vec<Vec<u32>>,
    pub tgt_factors: Vec<Vec<u32>>,
}

/// Padded batch. Target rows are wrapped as BOS tokens EOS with PAD beyond;
/// factor matrices align position-for-position with their side (target
/// factors carry BOS/EOS at the wrapped positions).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub src: IdMat,
    pub tgt: IdMat,
    pub src_lens: Vec<usize>,
    /// Content lengths (no BOS/EOS).
    pub tgt_lens: Vec<usize>,
    pub src_factors: Vec<IdMat>,
    pub tgt_factors: Vec<IdMat>,
}

impl Batch {
    pub fn rows(&self) -> usize {
        self.src.rows
    }

    /// True at real source positions, false at padding.
    pub fn src_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.src.rows * self.src.cols];
        for (b, &len) in self.src_lens.iter().enumerate() {
            for s in 0..len {
                mask[b * self.src.cols + s] = true;
            }
        }
        mask
    }

    /// Tokens the loss is averaged over: content plus EOS per row.
    pub fn target_tokens(&self) -> usize {
        self.tgt_lens.iter().map(|&l| l + 1).sum()
    }

    pub fn slice_rows(&self, lo: usize, hi: usize) -> Batch {
        Batch {
            src: self.src.slice_rows(lo, hi),
            tgt: self.tgt.slice_rows(lo, hi),
            src_lens: self.src_lens[lo..hi].to_vec(),
            tgt_lens: self.tgt_lens[lo..hi].to_vec(),
            src_factors: self.src_factors.iter().map(|m| m.slice_rows(lo, hi)).collect(),
            tgt_factors: self.tgt_factors.iter().map(|m| m.slice_rows(lo, hi)).collect(),
        }
    }

    fn from_pairs(pairs: &[&PairIds]) -> Batch {
        let b = pairs.len();
        let s_max = pairs.iter().map(|p| p.src.len()).max().unwrap_or(0).max(1);
        let t_max = pairs.iter().map(|p| p.tgt.len()).max().unwrap_or(0) + 2;
        let n_src_f = pairs.first().map_or(0, |p| p.src_factors.len());
        let n_tgt_f = pairs.first().map_or(0, |p| p.tgt_factors.len());

        let mut src = IdMat::filled(b, s_max, PAD);
        let mut tgt = IdMat::filled(b, t_max, PAD);
        let mut src_factors = vec![IdMat::filled(b, s_max, PAD); n_src_f];
        let mut tgt_factors = vec![IdMat::filled(b, t_max, PAD); n_tgt_f];
        let mut src_lens = Vec::with_capacity(b);
        let mut tgt_lens = Vec::with_capacity(b);

        for (r, p) in pairs.iter().enumerate() {
            for (c, &id) in p.src.iter().enumerate() {
                src.set(r, c, id);
            }
            tgt.set(r, 0, BOS);
            for (c, &id) in p.tgt.iter().enumerate() {
                tgt.set(r, c + 1, id);
            }
            tgt.set(r, p.tgt.len() + 1, EOS);
            for (f, seq) in p.src_factors.iter().enumerate() {
                for (c, &id) in seq.iter().enumerate() {
                    src_factors[f].set(r, c, id);
                }
            }
            for (f, seq) in p.tgt_factors.iter().enumerate() {
                tgt_factors[f].set(r, 0, BOS);
                for (c, &id) in seq.iter().enumerate() {
                    tgt_factors[f].set(r, c + 1, id);
                }
                tgt_factors[f].set(r, p.tgt.len() + 1, EOS);
            }
            src_lens.push(p.src.len());
            tgt_lens.push(p.tgt.len());
        }
        Batch { src, tgt, src_lens, tgt_lens, src_factors, tgt_factors }
    }
}

/// Bucket pairs by source length, group into batches, and shuffle the batch
/// order with the given seed. Every pair appears in exactly one batch.
pub fn make_batches(pairs: &[PairIds], batch_size: usize, shuffle_seed: u64) -> TextResult<Vec<Batch>> {
    if batch_size == 0 {
        return Err(TextError::Invalid { what: "batch size must be at least 1".into() });
    }
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by_key(|&i| pairs[i].src.len()); // stable: original order on ties

    let mut batches: Vec<Batch> = order
        .chunks(batch_size)
        .map(|chunk| {
            let members: Vec<&PairIds> = chunk.iter().map(|&i| &pairs[i]).collect();
            Batch::from_pairs(&members)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    batches.shuffle(&mut rng);
    Ok(batches)
}
