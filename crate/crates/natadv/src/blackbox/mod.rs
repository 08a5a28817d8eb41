//! Transfer evaluation against a remote sentiment service.
//!
//! Every original and adversarial sentence is sent to the service; the
//! report compares its accuracy and absolute error on both sides. Queries
//! that fail after retries are excluded and counted, never imputed.

mod client;
mod mock;

pub use client::{blackbox_eval, Client, RateLimiter};
pub use mock::{MockBehavior, MockConfig, MockServer, NEGATIVE_WORDS, POSITIVE_WORDS};

use std::collections::BTreeMap;
use std::time::Duration;

use natadv_core::text::Label;
use serde::{Deserialize, Serialize};

use crate::formats::AttackRecord;
use crate::{Error, Result};

pub const SCORE_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub base_url: String,
    /// Name of the environment variable holding a bearer token, if any.
    pub token_env: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub max_concurrent: usize,
    pub requests_per_second: u32,
    /// First retry delay; doubles on each further retry, plus jitter.
    pub backoff_base: Duration,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            token_env: None,
            timeout: Duration::from_millis(10_000),
            max_retries: 3,
            max_concurrent: 4,
            requests_per_second: 10,
            backoff_base: Duration::from_millis(500),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout.is_zero() {
            return Err(Error::Usage("timeout must be positive".into()));
        }
        if self.max_concurrent == 0 || self.requests_per_second == 0 {
            return Err(Error::Usage("concurrency and rate caps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SentimentLabel {
    Positive,
    Negative,
    Neutral,
    Mixed,
}

impl SentimentLabel {
    pub fn key(self) -> &'static str {
        match self {
            SentimentLabel::Positive => "POSITIVE",
            SentimentLabel::Negative => "NEGATIVE",
            SentimentLabel::Neutral => "NEUTRAL",
            SentimentLabel::Mixed => "MIXED",
        }
    }

    /// Binary reading; NEUTRAL and MIXED have none.
    pub fn binary(self) -> Option<Label> {
        match self {
            SentimentLabel::Positive => Some(Label::Positive),
            SentimentLabel::Negative => Some(Label::Negative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentResponse {
    pub label: SentimentLabel,
    pub scores: BTreeMap<String, f64>,
}

impl SentimentResponse {
    /// Scores must be probabilities summing to 1 and the label must carry the
    /// largest score.
    pub fn validate(&self) -> Result<()> {
        if self.scores.is_empty() {
            return Err(Error::Protocol("empty score map".into()));
        }
        if let Some((k, v)) = self.scores.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Protocol(format!("score {k} = {v} outside [0, 1]")));
        }
        let sum: f64 = self.scores.values().sum();
        if (sum - 1.0).abs() > SCORE_SUM_TOLERANCE {
            return Err(Error::Protocol(format!("scores sum to {sum}")));
        }
        let own = self
            .scores
            .get(self.label.key())
            .ok_or_else(|| Error::Protocol(format!("no score for label {}", self.label.key())))?;
        let max = self.scores.values().copied().fold(f64::MIN, f64::max);
        if *own < max {
            return Err(Error::Protocol(format!("label {} is not the top score", self.label.key())));
        }
        Ok(())
    }

    pub fn positive_score(&self) -> f64 {
        self.scores.get("POSITIVE").copied().unwrap_or(0.0)
    }

    pub fn parse(body: &str) -> Result<Self> {
        let r: SentimentResponse =
            serde_json::from_str(body).map_err(|e| Error::Protocol(format!("malformed body: {e}")))?;
        r.validate()?;
        Ok(r)
    }
}

/// One original/adversarial pair with its reference label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlackboxItem {
    pub label: Label,
    pub original: String,
    pub adversarial: String,
}

impl From<&AttackRecord> for BlackboxItem {
    fn from(r: &AttackRecord) -> Self {
        BlackboxItem {
            label: r.label,
            original: r.original.clone(),
            adversarial: r.adversarial.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlackboxReport {
    /// `None` only when no pair could be scored.
    pub accuracy_original: Option<f64>,
    pub accuracy_adversarial: Option<f64>,
    pub abs_error_original: Option<f64>,
    pub abs_error_adversarial: Option<f64>,
    pub n_pairs: usize,
    pub n_scored_pairs: usize,
    pub n_queries: usize,
    pub n_failures: usize,
}

/// Builds the report from per-item outcomes `(original, adversarial)`.
///
/// A pair counts only when both of its queries succeeded, so the two sides
/// are always measured on the same sentences. Accuracy counts NEUTRAL and
/// MIXED as wrong; absolute error is `|P(positive) − y|`.
pub fn build_blackbox_report(
    items: &[BlackboxItem],
    outcomes: &[(Result<SentimentResponse>, Result<SentimentResponse>)],
) -> Result<BlackboxReport> {
    if items.is_empty() {
        return Err(Error::Usage("no attack records to evaluate".into()));
    }
    if items.len() != outcomes.len() {
        return Err(Error::Harness("outcome count does not match items".into()));
    }
    let mut n_failures = 0;
    let (mut acc_o, mut acc_a, mut err_o, mut err_a, mut scored) = (0.0, 0.0, 0.0, 0.0, 0usize);
    for (item, (o, a)) in items.iter().zip(outcomes) {
        n_failures += o.is_err() as usize + a.is_err() as usize;
        let (Ok(o), Ok(a)) = (o, a) else { continue };
        let y = item.label.as_f64();
        scored += 1;
        acc_o += (o.label.binary() == Some(item.label)) as u8 as f64;
        acc_a += (a.label.binary() == Some(item.label)) as u8 as f64;
        err_o += (o.positive_score() - y).abs();
        err_a += (a.positive_score() - y).abs();
    }
    let mean = |s: f64| (scored > 0).then(|| s / scored as f64);
    let report = BlackboxReport {
        accuracy_original: mean(acc_o),
        accuracy_adversarial: mean(acc_a),
        abs_error_original: mean(err_o),
        abs_error_adversarial: mean(err_a),
        n_pairs: items.len(),
        n_scored_pairs: scored,
        n_queries: 2 * items.len(),
        n_failures,
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resp(label: SentimentLabel, pos: f64) -> SentimentResponse {
        let mut scores = BTreeMap::new();
        scores.insert("POSITIVE".to_string(), pos);
        scores.insert("NEGATIVE".to_string(), 1.0 - pos);
        SentimentResponse { label, scores }
    }

    fn item(label: Label) -> BlackboxItem {
        BlackboxItem {
            label,
            original: "o".into(),
            adversarial: "a".into(),
        }
    }

    #[test]
    fn validation_rules() {
        assert!(resp(SentimentLabel::Positive, 0.7).validate().is_ok());
        assert!(resp(SentimentLabel::Negative, 0.7).validate().is_err());
        let mut bad = resp(SentimentLabel::Positive, 0.6);
        bad.scores.insert("NEGATIVE".into(), 0.5);
        assert!(matches!(bad.validate(), Err(Error::Protocol(_))));
        let empty = SentimentResponse {
            label: SentimentLabel::Positive,
            scores: BTreeMap::new(),
        };
        assert!(empty.validate().is_err());
        assert!(SentimentResponse::parse("{\"label\":\"POSITIVE\"}").is_err());
        assert!(SentimentResponse::parse("{\"label\":\"POSITIVE\",\"scores\":{\"POSITIVE\":1.0}}").is_ok());
    }

    #[test]
    fn flipped_adversarials() {
        let items = [item(Label::Positive), item(Label::Negative)];
        let outcomes = vec![
            (Ok(resp(SentimentLabel::Positive, 1.0)), Ok(resp(SentimentLabel::Negative, 0.0))),
            (Ok(resp(SentimentLabel::Negative, 0.0)), Ok(resp(SentimentLabel::Positive, 1.0))),
        ];
        let r = build_blackbox_report(&items, &outcomes).unwrap();
        assert_eq!(r.accuracy_original, Some(1.0));
        assert_eq!(r.accuracy_adversarial, Some(0.0));
        assert_eq!(r.abs_error_original, Some(0.0));
        assert_eq!(r.abs_error_adversarial, Some(1.0));
        assert_eq!(r.n_failures, 0);
    }

    #[test]
    fn failed_pair_is_excluded() {
        let items = [item(Label::Positive), item(Label::Positive)];
        let outcomes = vec![
            (Ok(resp(SentimentLabel::Positive, 0.8)), Err(Error::Protocol("empty score map".into()))),
            (Ok(resp(SentimentLabel::Positive, 0.9)), Ok(resp(SentimentLabel::Negative, 0.3))),
        ];
        let r = build_blackbox_report(&items, &outcomes).unwrap();
        assert_eq!(r.n_scored_pairs, 1);
        assert_eq!(r.n_failures, 1);
        assert_eq!(r.accuracy_adversarial, Some(0.0));
        assert!((r.abs_error_original.unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn neutral_counts_as_wrong() {
        let mut n = resp(SentimentLabel::Neutral, 0.0);
        n.scores = [("NEUTRAL".to_string(), 1.0)].into_iter().collect();
        let r = build_blackbox_report(&[item(Label::Negative)], &[(Ok(n.clone()), Ok(n))]).unwrap();
        assert_eq!(r.accuracy_original, Some(0.0));
        assert_eq!(r.abs_error_original, Some(0.0));
    }

    #[test]
    fn all_failed_still_reports() {
        let r = build_blackbox_report(
            &[item(Label::Negative)],
            &[(Err(Error::Transport("down".into())), Err(Error::Transport("down".into())))],
        )
        .unwrap();
        assert_eq!(r.n_scored_pairs, 0);
        assert_eq!(r.accuracy_original, None);
        assert!(build_blackbox_report(&[], &[]).is_err());
    }
}
