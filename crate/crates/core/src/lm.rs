//! Additively smoothed n-gram language model over token ids.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::text::{TokenId, TokenSequence, BOS, EOS};
use crate::{Error, Result};

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<TokenId, u64>,
}

/// `P(w | ctx) = (c(ctx, w) + α) / (c(ctx) + α·V)` with the `n - 1`
/// preceding tokens as context, BOS-padded at the start of a sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramLm {
    order: usize,
    alpha: f64,
    vocab_size: usize,
    counts: BTreeMap<Vec<TokenId>, ContextCounts>,
}

impl NgramLm {
    /// A model with no counts, i.e. uniform over the vocabulary.
    pub fn new(order: usize, alpha: f64, vocab_size: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::contract("n-gram order must be at least 1"));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::contract("smoothing constant must be positive"));
        }
        if vocab_size == 0 {
            return Err(Error::contract("empty vocabulary"));
        }
        Ok(NgramLm {
            order,
            alpha,
            vocab_size,
            counts: BTreeMap::new(),
        })
    }

    /// Counts n-grams over `sentences`, each terminated by EOS.
    pub fn train<'a>(
        sentences: impl IntoIterator<Item = &'a TokenSequence>,
        order: usize,
        alpha: f64,
        vocab_size: usize,
    ) -> Result<Self> {
        let mut lm = NgramLm::new(order, alpha, vocab_size)?;
        let mut seen = false;
        for s in sentences {
            seen = true;
            lm.observe(s.ids())?;
        }
        if !seen {
            return Err(Error::contract("language model needs a nonempty corpus"));
        }
        Ok(lm)
    }

    fn observe(&mut self, ids: &[TokenId]) -> Result<()> {
        for (ctx, w) in self.events(ids)? {
            let entry = self.counts.entry(ctx).or_default();
            entry.total += 1;
            *entry.next.entry(w).or_insert(0) += 1;
        }
        Ok(())
    }

    /// `(context, token)` pairs scored for a sentence, EOS included.
    fn events(&self, ids: &[TokenId]) -> Result<Vec<(Vec<TokenId>, TokenId)>> {
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= self.vocab_size) {
            return Err(Error::Index {
                index: bad as usize,
                size: self.vocab_size,
            });
        }
        let ctx_len = self.order - 1;
        let mut padded = vec![BOS; ctx_len];
        padded.extend_from_slice(ids);
        padded.push(EOS);
        Ok((ctx_len..padded.len())
            .map(|t| (padded[t - ctx_len..t].to_vec(), padded[t]))
            .collect())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Every observed `(context, token, count)`, in key order.
    pub fn counts(&self) -> impl Iterator<Item = (&[TokenId], TokenId, u64)> + '_ {
        self.counts
            .iter()
            .flat_map(|(ctx, cc)| cc.next.iter().map(move |(&w, &c)| (ctx.as_slice(), w, c)))
    }

    /// Adds `count` observations of `token` after a full-length context.
    pub fn add_count(&mut self, context: &[TokenId], token: TokenId, count: u64) -> Result<()> {
        if context.len() != self.order - 1 {
            return Err(Error::contract("context length must be order - 1"));
        }
        if let Some(&bad) = context.iter().chain(Some(&token)).find(|&&id| id as usize >= self.vocab_size) {
            return Err(Error::Index {
                index: bad as usize,
                size: self.vocab_size,
            });
        }
        let entry = self.counts.entry(context.to_vec()).or_default();
        entry.total += count;
        *entry.next.entry(token).or_insert(0) += count;
        Ok(())
    }

    /// Conditional probability of `token` after `context` (the last
    /// `n - 1` ids; shorter contexts are BOS-padded on the left).
    pub fn prob(&self, context: &[TokenId], token: TokenId) -> f64 {
        let key = self.context_key(context);
        let (c, total) = match self.counts.get(&key) {
            Some(cc) => (cc.next.get(&token).copied().unwrap_or(0), cc.total),
            None => (0, 0),
        };
        (c as f64 + self.alpha) / (total as f64 + self.alpha * self.vocab_size as f64)
    }

    /// Full next-token distribution for a context.
    pub fn distribution(&self, context: &[TokenId]) -> Vec<f64> {
        (0..self.vocab_size as TokenId).map(|w| self.prob(context, w)).collect()
    }

    fn context_key(&self, context: &[TokenId]) -> Vec<TokenId> {
        let ctx_len = self.order - 1;
        let tail = &context[context.len().saturating_sub(ctx_len)..];
        let mut key = vec![BOS; ctx_len - tail.len()];
        key.extend_from_slice(tail);
        key
    }

    /// Mean negative log-likelihood per token (natural log), EOS counted.
    pub fn log_perplexity(&self, ids: &TokenSequence) -> Result<f64> {
        if ids.is_empty() {
            return Err(Error::contract("log-perplexity of an empty sequence"));
        }
        let events = self.events(ids.ids())?;
        let n = events.len() as f64;
        let nll: f64 = events.iter().map(|(ctx, w)| -math::log(self.prob(ctx, *w))).sum();
        Ok(nll / n)
    }
}
