//! Tiny synthetic corpora for tests, benchmarks, and demos.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::textpipe::{PairIds, Vocab, NUM_SPECIALS};

/// Vocabulary of `n_symbols` synthetic tokens t00, t01, ...
pub fn symbol_vocab(n_symbols: usize) -> Vocab {
    Vocab::from_tokens((0..n_symbols).map(|i| format!("t{i:02}")))
}

/// Copy-task pairs as ids: source equals target, lengths uniform in
/// 1..=max_len, symbols uniform over the non-special vocabulary.
pub fn copy_id_pairs(seed: u64, n: usize, max_len: usize, n_symbols: usize) -> Vec<PairIds> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(1..=max_len);
            let ids: Vec<u32> = (0..len)
                .map(|_| (NUM_SPECIALS + rng.gen_range(0..n_symbols)) as u32)
                .collect();
            PairIds { src: ids.clone(), tgt: ids, ..Default::default() }
        })
        .collect()
}

/// The same pairs as text lines (for file-based pipelines).
pub fn copy_lines(seed: u64, n: usize, max_len: usize, n_symbols: usize) -> Vec<String> {
    let vocab = symbol_vocab(n_symbols);
    copy_id_pairs(seed, n, max_len, n_symbols)
        .into_iter()
        .map(|p| {
            p.src
                .iter()
                .map(|&id| vocab.token(id).to_string())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}
