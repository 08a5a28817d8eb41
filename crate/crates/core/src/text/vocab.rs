use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::bpe::END_OF_WORD;
use crate::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;

pub const RESERVED: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Default cap on vocabulary size, reserved entries included.
pub const DEFAULT_VOCAB_LIMIT: usize = 8000;
/// Default crop length in subword units.
pub const DEFAULT_MAX_UNITS: usize = 30;

/// Bidirectional subword/id map with four reserved ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: BTreeMap<String, TokenId>,
}

/// Ids of one cropped sentence. No padding is stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TokenSequence(Vec<TokenId>);

impl TokenSequence {
    pub fn new(ids: Vec<TokenId>) -> Self {
        TokenSequence(ids)
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_ids(self) -> Vec<TokenId> {
        self.0
    }
}

impl From<Vec<TokenId>> for TokenSequence {
    fn from(ids: Vec<TokenId>) -> Self {
        TokenSequence(ids)
    }
}

impl Vocabulary {
    /// Keeps the `limit - 4` most frequent subwords; ties are ordered
    /// lexicographically and everything past the cap maps to UNK.
    pub fn build(counts: &BTreeMap<String, u64>, limit: usize) -> Result<Self> {
        if limit < RESERVED.len() {
            return Err(Error::contract("vocabulary limit below the reserved entries"));
        }
        let mut entries: Vec<(&String, u64)> = counts
            .iter()
            .filter(|(s, _)| !RESERVED.contains(&s.as_str()))
            .map(|(s, &c)| (s, c))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        entries.truncate(limit - RESERVED.len());
        Self::from_subwords(entries.into_iter().map(|(s, _)| s.clone()))
    }

    /// Reserved entries followed by `subwords` in order.
    pub fn from_subwords(subwords: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(subwords);
        Self::from_tokens(tokens)
    }

    /// Full id-ordered token list, reserved entries included.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens.iter().zip(RESERVED).any(|(t, r)| t != r) {
            return Err(Error::contract("vocabulary must start with <pad> <s> </s> <unk>"));
        }
        let mut ids = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains(['\t', '\n']) {
                return Err(Error::contract(alloc::format!("invalid subword at id {i}")));
            }
            if ids.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::contract(alloc::format!("duplicate subword `{t}`")));
            }
        }
        Ok(Vocabulary { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, subword: &str) -> Option<TokenId> {
        self.ids.get(subword).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Non-reserved ids, most frequent first.
    pub fn content_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        RESERVED.len() as TokenId..self.tokens.len() as TokenId
    }

    /// Maps subwords to ids (UNK when absent) and keeps the first
    /// `max_units`.
    pub fn encode_ids<S: AsRef<str>>(&self, subwords: &[S], max_units: usize) -> TokenSequence {
        TokenSequence(
            subwords
                .iter()
                .take(max_units)
                .map(|s| self.id(s.as_ref()).unwrap_or(UNK))
                .collect(),
        )
    }

    /// Joins subwords back into space-separated words, stopping at EOS.
    pub fn decode_text(&self, ids: &[TokenId]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let tok = self.token(id).ok_or(Error::Index {
                index: id as usize,
                size: self.len(),
            })?;
            match id {
                EOS => break,
                PAD | BOS => continue,
                UNK => {
                    out.push_str(tok);
                    out.push(' ');
                }
                _ => match tok.strip_suffix(END_OF_WORD) {
                    Some(stem) => {
                        out.push_str(stem);
                        out.push(' ');
                    }
                    None => out.push_str(tok),
                },
            }
        }
        let trimmed = out.trim_end().len();
        out.truncate(trimmed);
        Ok(out)
    }
}
