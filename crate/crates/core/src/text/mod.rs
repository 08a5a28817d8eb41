//! Tokenization, subword segmentation and id encoding.

mod bpe;
mod tokenize;
mod vocab;

pub use bpe::{BpeModel, END_OF_WORD};
pub use tokenize::tokenize;
pub use vocab::{
    TokenId, TokenSequence, Vocabulary, BOS, DEFAULT_MAX_UNITS, DEFAULT_VOCAB_LIMIT, EOS, PAD, RESERVED, UNK,
};

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Binary sentiment label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Negative = 0,
    Positive = 1,
}

impl Label {
    pub fn from_index(i: u8) -> Option<Label> {
        match i {
            0 => Some(Label::Negative),
            1 => Some(Label::Positive),
            _ => None,
        }
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn as_f64(self) -> f64 {
        self.index() as f64
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Negative => Label::Positive,
            Label::Positive => Label::Negative,
        }
    }

    /// Label for a positive-class probability, positive at `p >= 0.5`.
    pub fn from_probability(p: f64) -> Label {
        if p >= 0.5 {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub label: Label,
    pub text: String,
    pub ids: TokenSequence,
}

/// Settings for fitting a [`TextEncoder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineConfig {
    pub num_merges: usize,
    pub vocab_limit: usize,
    pub max_units: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            num_merges: 4000,
            vocab_limit: DEFAULT_VOCAB_LIMIT,
            max_units: DEFAULT_MAX_UNITS,
        }
    }
}

/// Tokenizer, subword model and vocabulary bundled for text -> ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoder {
    pub bpe: BpeModel,
    pub vocab: Vocabulary,
    pub max_units: usize,
}

impl TextEncoder {
    /// Learns merges and a frequency-ranked vocabulary from raw texts.
    pub fn fit<S: AsRef<str>>(texts: &[S], cfg: &PipelineConfig) -> Result<Self> {
        let mut word_freqs: BTreeMap<String, u64> = BTreeMap::new();
        for t in texts {
            for w in tokenize(t.as_ref()) {
                *word_freqs.entry(w).or_insert(0) += 1;
            }
        }
        if word_freqs.is_empty() {
            return Err(Error::contract("corpus has no tokens"));
        }
        let bpe = BpeModel::learn(&word_freqs, cfg.num_merges)?;
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for (w, c) in &word_freqs {
            for sub in bpe.encode_word(w) {
                *counts.entry(sub).or_insert(0) += c;
            }
        }
        let vocab = Vocabulary::build(&counts, cfg.vocab_limit)?;
        Ok(TextEncoder {
            bpe,
            vocab,
            max_units: cfg.max_units,
        })
    }

    pub fn subwords(&self, text: &str) -> Vec<String> {
        tokenize(text)
            .iter()
            .flat_map(|w| self.bpe.encode_word(w))
            .collect()
    }

    pub fn encode(&self, text: &str) -> TokenSequence {
        self.vocab.encode_ids(&self.subwords(text), self.max_units)
    }

    pub fn decode(&self, ids: &TokenSequence) -> Result<String> {
        self.vocab.decode_text(ids.ids())
    }

    pub fn example(&self, label: Label, text: String) -> LabeledExample {
        let ids = self.encode(&text);
        LabeledExample { label, text, ids }
    }
}

/// Tokens joined by single spaces, the surface form `decode_text` restores.
pub fn detokenize(text: &str) -> String {
    tokenize(text).join(" ")
}
