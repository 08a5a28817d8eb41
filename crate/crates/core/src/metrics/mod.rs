//! Objective metrics for adversarial examples.

mod bleu;
mod diff;

pub use bleu::{bleu, BleuConfig};
pub use diff::{diff_tokens, render_diff, DiffOp};

use crate::lm::NgramLm;
use crate::text::TokenSequence;
use crate::{Error, Result};

/// Mean of [`NgramLm::log_perplexity`] over `sentences`.
pub fn corpus_log_perplexity<'a>(lm: &NgramLm, sentences: impl IntoIterator<Item = &'a TokenSequence>) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in sentences {
        sum += lm.log_perplexity(s)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::contract("corpus log-perplexity of an empty list"));
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn mean_over_sentences() {
        let corpus = vec![TokenSequence::new(vec![4, 5]), TokenSequence::new(vec![5, 6, 4])];
        let lm = NgramLm::train(&corpus, 2, 0.1, 8).unwrap();
        let single = lm.log_perplexity(&corpus[0]).unwrap();
        assert_eq!(corpus_log_perplexity(&lm, &corpus[..1]).unwrap(), single);
        let both = corpus_log_perplexity(&lm, &corpus).unwrap();
        let doubled: alloc::vec::Vec<_> = corpus.iter().chain(&corpus).cloned().collect();
        assert!((corpus_log_perplexity(&lm, &doubled).unwrap() - both).abs() < 1e-12);
        assert!(corpus_log_perplexity(&lm, &[]).is_err());
    }
}
