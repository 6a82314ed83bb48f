//! Reversible language-independent tokenization.
//!
//! A line is first whitespace-normalized (runs of whitespace collapse to
//! single spaces, ends trimmed), then split on whitespace and on boundaries
//! between alphanumeric and non-alphanumeric runs. When a split point had no
//! space in the original text, the right-hand piece is prefixed with the
//! joiner marker so detokenization can glue it back deterministically.
//!
//! No Unicode normalization is performed; the round-trip guarantee is
//! `detokenize(tokenize(line)) == normalize_ws(line)` for any line that does
//! not itself contain the joiner marker as a standalone word.

/// Marker recording an absent space at a split point.
pub const JOINER: char = '\u{FFED}';

pub fn normalize_ws(line: &str) -> String {
    line.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Split one whitespace-delimited word into maximal same-class runs
/// (alphanumeric vs other).
fn split_word(word: &str, out: &mut Vec<String>) {
    let mut piece = String::new();
    let mut piece_class: Option<bool> = None;
    let mut first = true;
    for c in word.chars() {
        let class = is_word_char(c);
        if piece_class == Some(class) || piece_class.is_none() {
            piece.push(c);
            piece_class = Some(class);
            continue;
        }
        push_piece(out, std::mem::take(&mut piece), first);
        first = false;
        piece.push(c);
        piece_class = Some(class);
    }
    if !piece.is_empty() {
        push_piece(out, piece, first);
    }
}

fn push_piece(out: &mut Vec<String>, piece: String, first: bool) {
    if first {
        out.push(piece);
    } else {
        let mut tok = String::with_capacity(piece.len() + 3);
        tok.push(JOINER);
        tok.push_str(&piece);
        out.push(tok);
    }
}

pub fn tokenize(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in line.split_whitespace() {
        split_word(word, &mut out);
    }
    out
}

/// Exact inverse of `tokenize` on its image: joins with single spaces except
/// where a joiner marker suppresses the space; markers are stripped.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut glue_next = true; // no leading space
    for tok in tokens {
        let mut t = tok.as_ref();
        let mut glued = glue_next;
        if let Some(stripped) = t.strip_prefix(JOINER) {
            t = stripped;
            glued = true;
        }
        glue_next = false;
        if let Some(stripped) = t.strip_suffix(JOINER) {
            t = stripped;
            glue_next = true;
        }
        if !glued && !out.is_empty() {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}
