//! Token/id maps with fixed reserved ids.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{TextError, TextResult};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const NUM_SPECIALS: usize = 4;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, u32>,
}

impl Vocab {
    /// Vocab holding only the reserved specials.
    pub fn specials_only() -> Self {
        Vocab::from_tokens(std::iter::empty::<String>())
    }

    /// Build from non-special tokens in id order (id 4 onward).
    pub fn from_tokens<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        let mut id_to_token: Vec<String> = vec![
            PAD_TOKEN.to_string(),
            UNK_TOKEN.to_string(),
            BOS_TOKEN.to_string(),
            EOS_TOKEN.to_string(),
        ];
        for t in tokens {
            id_to_token.push(t.into());
        }
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab { id_to_token, token_to_id }
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: u32) -> &str {
        self.id_to_token
            .get(id as usize)
            .map(String::as_str)
            .unwrap_or(UNK_TOKEN)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Non-special tokens in id order, as stored in vocab files.
    pub fn non_special_tokens(&self) -> &[String] {
        &self.id_to_token[NUM_SPECIALS..]
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&id| self.token(id).to_string()).collect()
    }

    /// One non-special token per line; id = line number - 1 + 4.
    pub fn write_to(&self, w: &mut impl Write) -> TextResult<()> {
        for t in self.non_special_tokens() {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl BufRead) -> TextResult<Self> {
        let mut tokens = Vec::new();
        for line in r.lines() {
            tokens.push(line?);
        }
        // allow a trailing empty line from text editors
        if tokens.last().map(String::as_str) == Some("") {
            tokens.pop();
        }
        Ok(Vocab::from_tokens(tokens))
    }
}

/// Most-frequent tokens first, ties broken lexicographically, truncated to
/// `max_size` including the four specials.
pub fn build_vocab<'a>(
    corpus: impl IntoIterator<Item = &'a str>,
    max_size: usize,
) -> TextResult<Vocab> {
    if max_size <= NUM_SPECIALS {
        return Err(TextError::Invalid {
            what: format!("vocabulary cap {max_size} leaves no room beyond the specials"),
        });
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for token in corpus {
        if !token.is_empty() {
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    let mut by_freq: Vec<(&str, u64)> = counts.into_iter().collect();
    by_freq.sort_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then_with(|| ta.cmp(tb)));
    by_freq.truncate(max_size - NUM_SPECIALS);
    Ok(Vocab::from_tokens(by_freq.into_iter().map(|(t, _)| t)))
}
