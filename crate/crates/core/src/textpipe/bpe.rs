//! Byte pair encoding: learn merges on a token stream, split tokens into
//! subword pieces.
//!
//! Each word starts as its characters plus an end-of-word sentinel. Learning
//! repeatedly merges the most frequent adjacent symbol pair; frequency ties
//! break toward the lexicographically smaller pair. Applying a model
//! repeatedly performs the earliest-learned merge present until none
//! applies. Subword pieces other than the last carry a continuation marker.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{TextError, TextResult};

pub const END_OF_WORD: &str = "</w>";
/// Suffix marking a non-final subword piece.
pub const CONTINUATION: char = '\u{2027}';
const FILE_HEADER: &str = "#minnmt-bpe v1";

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
}

impl BpeModel {
    pub fn new(merges: Vec<(String, String)>) -> Self {
        BpeModel { merges }
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn num_merges(&self) -> usize {
        self.merges.len()
    }

    /// Split a token into subword pieces, continuation-marked except the
    /// last. Unknown tokens fall back to character pieces.
    pub fn apply(&self, token: &str) -> Vec<String> {
        if token.is_empty() {
            return Vec::new();
        }
        let mut symbols: Vec<String> = token.chars().map(|c| c.to_string()).collect();
        symbols.push(END_OF_WORD.to_string());

        let rank: HashMap<(&str, &str), usize> = self
            .merges
            .iter()
            .enumerate()
            .map(|(i, (l, r))| ((l.as_str(), r.as_str()), i))
            .collect();

        loop {
            let mut best: Option<(usize, usize)> = None; // (rank, position)
            for i in 0..symbols.len() - 1 {
                if let Some(&r) = rank.get(&(symbols[i].as_str(), symbols[i + 1].as_str())) {
                    if best.map_or(true, |(br, _)| r < br) {
                        best = Some((r, i));
                    }
                }
            }
            let Some((r, _)) = best else { break };
            let (l, rgt) = &self.merges[r];
            merge_pair(&mut symbols, l, rgt);
        }

        // strip the sentinel and attach continuation markers
        if symbols.last().map(String::as_str) == Some(END_OF_WORD) {
            symbols.pop();
        } else if let Some(last) = symbols.last_mut() {
            if let Some(stripped) = last.strip_suffix(END_OF_WORD) {
                *last = stripped.to_string();
            }
        }
        let n = symbols.len();
        symbols
            .into_iter()
            .enumerate()
            .map(|(i, mut s)| {
                if i + 1 < n {
                    s.push(CONTINUATION);
                }
                s
            })
            .collect()
    }

    pub fn write_to(&self, w: &mut impl Write) -> TextResult<()> {
        writeln!(w, "{FILE_HEADER}")?;
        for (l, r) in &self.merges {
            writeln!(w, "{l} {r}")?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl BufRead) -> TextResult<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim_end() != FILE_HEADER {
            return Err(TextError::Format {
                line: 1,
                what: format!("expected header {FILE_HEADER:?}, got {header:?}"),
            });
        }
        let mut merges = Vec::new();
        for (idx, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut it = line.split(' ');
            match (it.next(), it.next(), it.next()) {
                (Some(l), Some(r), None) => merges.push((l.to_string(), r.to_string())),
                _ => {
                    return Err(TextError::Format {
                        line: idx + 2,
                        what: format!("bad merge line {line:?}"),
                    })
                }
            }
        }
        Ok(BpeModel { merges })
    }
}

/// Replace all non-overlapping adjacent (l, r) occurrences left-to-right.
fn merge_pair(symbols: &mut Vec<String>, l: &str, r: &str) {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == l && symbols[i + 1] == r {
            out.push(format!("{l}{r}"));
            i += 2;
        } else {
            out.push(std::mem::take(&mut symbols[i]));
            i += 1;
        }
    }
    *symbols = out;
}

/// Learn `num_merges` merges from a token stream by exhaustive pair counting.
pub fn learn_bpe<'a>(corpus: impl IntoIterator<Item = &'a str>, num_merges: usize) -> BpeModel {
    let mut word_counts: HashMap<Vec<String>, u64> = HashMap::new();
    for token in corpus {
        if token.is_empty() {
            continue;
        }
        let mut symbols: Vec<String> = token.chars().map(|c| c.to_string()).collect();
        symbols.push(END_OF_WORD.to_string());
        *word_counts.entry(symbols).or_insert(0) += 1;
    }

    let mut words: Vec<(Vec<String>, u64)> = word_counts.into_iter().collect();
    words.sort(); // deterministic iteration; selection is order-free anyway

    let mut merges = Vec::with_capacity(num_merges);
    for _ in 0..num_merges {
        let mut pair_counts: HashMap<(String, String), u64> = HashMap::new();
        for (symbols, count) in &words {
            for win in symbols.windows(2) {
                *pair_counts.entry((win[0].clone(), win[1].clone())).or_insert(0) += count;
            }
        }
        let Some(best) = pair_counts
            .into_iter()
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)))
            .map(|(p, _)| p)
        else {
            break;
        };
        for (symbols, _) in words.iter_mut() {
            merge_pair(symbols, &best.0, &best.1);
        }
        merges.push(best);
    }
    BpeModel { merges }
}

/// Undo subword splitting: glue continuation-marked pieces to their
/// successors.
pub fn undo_bpe<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(tokens.len());
    let mut pending = String::new();
    for tok in tokens {
        let t = tok.as_ref();
        match t.strip_suffix(CONTINUATION) {
            Some(head) => pending.push_str(head),
            None => {
                pending.push_str(t);
                out.push(std::mem::take(&mut pending));
            }
        }
    }
    if !pending.is_empty() {
        out.push(pending);
    }
    out
}
