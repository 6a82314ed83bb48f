//! Word embedding import/export in the word2vec text format: a "V D" header
//! line, then one "word v1 ... vD" line per word. Values are written with
//! Rust's shortest round-trip float formatting, so export followed by import
//! is bit-exact. Tokens containing a space or backslash are escaped as
//! `\_` and `\\` respectively.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use minnmt_tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::vocab::Vocab;
use crate::error::{TextError, TextResult};

pub fn escape_token(token: &str) -> String {
    token.replace('\\', "\\\\").replace(' ', "\\_")
}

pub fn unescape_token(token: &str) -> String {
    let mut out = String::with_capacity(token.len());
    let mut chars = token.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('_') => out.push(' '),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// Embedding rows for every vocab entry: file rows where the word is in
/// vocab, seeded uniform [-0.1, 0.1] draws for the rest.
pub fn load_embeddings(
    reader: &mut impl BufRead,
    vocab: &Vocab,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> TextResult<Tensor> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or(TextError::Format { line: 1, what: "missing header".into() })?;
    let mut it = header.split_whitespace();
    let (count, file_dim) = match (it.next(), it.next(), it.next()) {
        (Some(v), Some(d), None) => {
            let v: usize = v.parse().map_err(|_| TextError::Format {
                line: 1,
                what: format!("bad vocabulary count {v:?}"),
            })?;
            let d: usize = d.parse().map_err(|_| TextError::Format {
                line: 1,
                what: format!("bad dimension {d:?}"),
            })?;
            (v, d)
        }
        _ => {
            return Err(TextError::Format {
                line: 1,
                what: format!("expected \"V D\" header, got {header:?}"),
            })
        }
    };
    if file_dim != dim {
        return Err(TextError::EmbeddingDim { file_dim, requested: dim });
    }

    let mut by_token: HashMap<String, Vec<f64>> = HashMap::with_capacity(count);
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        let token = unescape_token(parts.next().unwrap_or(""));
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| TextError::Format {
                    line: line_no,
                    what: format!("bad float {p:?}"),
                })
            })
            .collect::<Result<_, _>>()?;
        if values.len() != dim {
            return Err(TextError::Format {
                line: line_no,
                what: format!("{} values, expected {dim}", values.len()),
            });
        }
        by_token.insert(token, values);
    }

    let mut data = Vec::with_capacity(vocab.size() * dim);
    for token in vocab.tokens() {
        match by_token.get(token) {
            Some(row) => data.extend_from_slice(row),
            None => data.extend((0..dim).map(|_| rng.gen_range(-0.1..0.1))),
        }
    }
    Ok(Tensor::new(vec![vocab.size(), dim], data).expect("consistent embedding shape"))
}

/// Write an embedding matrix for a vocab in id order.
pub fn write_embeddings(
    w: &mut impl Write,
    vocab: &Vocab,
    matrix: &Tensor,
) -> TextResult<()> {
    let (rows, dim) = matrix
        .dims2()
        .map_err(|e| TextError::Invalid { what: e.to_string() })?;
    if rows != vocab.size() {
        return Err(TextError::Invalid {
            what: format!("matrix has {rows} rows but vocab has {}", vocab.size()),
        });
    }
    writeln!(w, "{} {}", rows, dim)?;
    for (id, token) in vocab.tokens().iter().enumerate() {
        write!(w, "{}", escape_token(token))?;
        for v in matrix.row(id) {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn vocab_abc() -> Vocab {
        Vocab::from_tokens(["alpha", "beta"])
    }

    #[test]
    fn full_coverage_copies_rows_exactly() {
        let vocab = vocab_abc();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let matrix = Tensor::new(
            vec![vocab.size(), 2],
            (0..vocab.size() * 2).map(|i| i as f64 * 0.125 - 0.3).collect(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &vocab, &matrix).unwrap();
        let loaded = load_embeddings(&mut buf.as_slice(), &vocab, 2, &mut rng).unwrap();
        assert_eq!(loaded.data(), matrix.data());
    }

    #[test]
    fn missing_words_are_seeded_and_reproducible() {
        let vocab = vocab_abc();
        let file = b"1 2\nunrelated 1.0 2.0\n";
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let a = load_embeddings(&mut file.as_slice(), &vocab, 2, &mut r1).unwrap();
        let b = load_embeddings(&mut file.as_slice(), &vocab, 2, &mut r2).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(a.data().iter().all(|v| (-0.1..0.1).contains(v)));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let vocab = vocab_abc();
        let file = b"1 50\n";
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = load_embeddings(&mut file.as_slice(), &vocab, 300, &mut rng).unwrap_err();
        assert!(matches!(err, TextError::EmbeddingDim { file_dim: 50, requested: 300 }));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let vocab = vocab_abc();
        let file = b"2 2\nalpha 0.5 0.25\nbeta 0.5 oops\n";
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = load_embeddings(&mut file.as_slice(), &vocab, 2, &mut rng).unwrap_err();
        match err {
            TextError::Format { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn token_escaping_round_trips() {
        for token in ["plain", "with space", "back\\slash", "\\_tricky mix\\ "] {
            assert_eq!(unescape_token(&escape_token(token)), token);
            assert!(!escape_token(token).contains(' '));
        }
    }
}
