use alloc::collections::BTreeMap;

use crate::math;
use crate::{Error, Result};

/// Sentence-level BLEU settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BleuConfig {
    pub max_n: usize,
    /// Add-one smoothing for orders `n >= 2` whose clipped match count is
    /// zero.
    pub smoothing: bool,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig {
            max_n: 4,
            smoothing: true,
        }
    }
}

fn ngram_counts<T: Ord>(tokens: &[T], n: usize) -> BTreeMap<&[T], usize> {
    let mut m = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Geometric mean of clipped n-gram precisions times the brevity penalty.
///
/// An empty candidate scores 0; an empty reference is rejected.
pub fn bleu<T: Ord>(candidate: &[T], reference: &[T], cfg: &BleuConfig) -> Result<f64> {
    if !(1..=4).contains(&cfg.max_n) {
        return Err(Error::contract("BLEU order must be between 1 and 4"));
    }
    if reference.is_empty() {
        return Err(Error::contract("BLEU reference must be nonempty"));
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 1..=cfg.max_n {
        let cand = ngram_counts(candidate, n);
        let refs = ngram_counts(reference, n);
        let total = candidate.len().saturating_sub(n - 1);
        let matched: usize = cand
            .iter()
            .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if matched > 0 {
            matched as f64 / total as f64
        } else if n >= 2 && cfg.smoothing {
            1.0 / (total as f64 + 1.0)
        } else {
            return Ok(0.0);
        };
        log_sum += math::log(p);
    }
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c < r { math::exp(1.0 - r / c) } else { 1.0 };
    Ok((bp * math::exp(log_sum / cfg.max_n as f64)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> alloc::vec::Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identity_is_one() {
        let s = words("the food was not good .");
        assert_eq!(bleu(&s, &s, &BleuConfig::default()).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_is_zero() {
        let cfg = BleuConfig::default();
        assert_eq!(bleu(&words("a b c"), &words("x y z"), &cfg).unwrap(), 0.0);
    }

    #[test]
    fn clipped_unigram_precision() {
        let cfg = BleuConfig {
            max_n: 1,
            smoothing: true,
        };
        let s = bleu(&words("the the the"), &words("the cat"), &cfg).unwrap();
        assert!((s - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_inputs() {
        let cfg = BleuConfig::default();
        assert_eq!(bleu(&[] as &[&str], &words("a"), &cfg).unwrap(), 0.0);
        assert!(bleu(&words("a"), &[] as &[&str], &cfg).is_err());
    }
}
