//! Corpus-level BLEU-4 with clipped n-gram counts and brevity penalty.

use std::collections::HashMap;

use crate::error::{EvalError, EvalResult};

#[derive(Debug, Clone, PartialEq)]
pub struct BleuReport {
    /// Percentage in [0, 100].
    pub bleu: f64,
    pub precisions: [f64; 4],
    pub brevity_penalty: f64,
    pub candidate_len: usize,
    pub reference_len: usize,
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for win in tokens.windows(n) {
            let key = win.iter().map(|t| t.as_ref()).collect::<Vec<_>>().join("\u{1}");
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU of one candidate per reference. Without smoothing, any
/// n-gram order with zero matches zeroes the score; with smoothing, clipped
/// matches and totals each gain one. Orders longer than every candidate
/// (zero total) are skipped rather than treated as failures.
pub fn bleu<S: AsRef<str>>(
    candidates: &[Vec<S>],
    references: &[Vec<S>],
    smooth: bool,
) -> EvalResult<BleuReport> {
    if candidates.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    let mut matches = [0u64; 4];
    let mut totals = [0u64; 4];
    let mut candidate_len = 0usize;
    let mut reference_len = 0usize;
    for (cand, reference) in candidates.iter().zip(references) {
        candidate_len += cand.len();
        reference_len += reference.len();
        for n in 1..=4usize {
            let cand_counts = ngram_counts(cand, n);
            if cand_counts.is_empty() {
                continue;
            }
            let ref_counts = ngram_counts(reference, n);
            for (gram, count) in cand_counts {
                totals[n - 1] += count;
                let clip = ref_counts.get(&gram).copied().unwrap_or(0);
                matches[n - 1] += count.min(clip);
            }
        }
    }

    let mut precisions = [0.0f64; 4];
    let mut log_sum = 0.0f64;
    let mut orders = 0usize;
    let mut any_zero = false;
    for n in 0..4 {
        if totals[n] == 0 {
            precisions[n] = 0.0;
            continue;
        }
        let (m, t) = if smooth { (matches[n] + 1, totals[n] + 1) } else { (matches[n], totals[n]) };
        precisions[n] = m as f64 / t as f64;
        orders += 1;
        if m == 0 {
            any_zero = true;
        } else {
            log_sum += (m as f64 / t as f64).ln();
        }
    }

    let brevity_penalty = if candidate_len == 0 {
        0.0
    } else {
        (1.0 - reference_len as f64 / candidate_len as f64).exp().min(1.0)
    };
    let bleu = if any_zero || orders == 0 || candidate_len == 0 {
        0.0
    } else {
        100.0 * brevity_penalty * (log_sum / orders as f64).exp()
    };
    Ok(BleuReport { bleu, precisions, brevity_penalty, candidate_len, reference_len })
}
