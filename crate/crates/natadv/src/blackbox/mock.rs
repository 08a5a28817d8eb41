//! Offline stand-in for a sentiment service, speaking the same wire format.

use std::net::SocketAddr;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use natadv_core::text::tokenize;
use serde_json::json;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::{Error, Result};

pub const POSITIVE_WORDS: &[&str] = &[
    "good", "great", "amazing", "excellent", "delicious", "fresh", "wonderful", "lovely", "tasty", "perfect",
    "fantastic", "best", "nice", "love", "loved", "like", "enjoyed", "recommend", "adore", "friendly", "helpful",
    "kind", "attentive", "polite",
];

pub const NEGATIVE_WORDS: &[&str] = &[
    "bad", "awful", "terrible", "horrible", "bland", "cold", "stale", "greasy", "soggy", "worst", "disgusting",
    "poor", "hate", "regret", "avoid", "dislike", "rude", "slow", "lazy", "careless", "unfriendly", "grumpy",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockBehavior {
    /// POSITIVE with probability 1 for every text.
    EchoPositive,
    /// `P(positive) = pos / (pos + neg)` over lexicon hits; NEUTRAL when tied.
    KeywordLexicon,
    /// The lexicon's label with probability 1, flipped when the text
    /// contains the marker.
    FlipOnMarker,
}

impl FromStr for MockBehavior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "echo_positive" => Ok(MockBehavior::EchoPositive),
            "keyword_lexicon" => Ok(MockBehavior::KeywordLexicon),
            "flip_on_marker" => Ok(MockBehavior::FlipOnMarker),
            _ => Err(Error::Usage(format!(
                "unknown mock behavior `{s}` (echo_positive, keyword_lexicon, flip_on_marker)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockConfig {
    pub behavior: MockBehavior,
    /// The first this-many requests get a 503.
    pub fail_first_n: usize,
    pub marker: String,
    /// Texts containing this answer with an empty score map.
    pub empty_scores_on: Option<String>,
}

impl MockConfig {
    pub const DEFAULT_MARKER: &'static str = "zzflip";

    pub fn new(behavior: MockBehavior) -> Self {
        MockConfig {
            behavior,
            fail_first_n: 0,
            marker: Self::DEFAULT_MARKER.to_string(),
            empty_scores_on: None,
        }
    }
}

struct Shared {
    cfg: MockConfig,
    started: Instant,
    requests: AtomicUsize,
    log: Mutex<Vec<Duration>>,
}

pub struct MockServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl MockServer {
    /// Binds `127.0.0.1:port` (0 picks a free port) and serves in the
    /// background of the current runtime.
    pub async fn start(port: u16, cfg: MockConfig) -> Result<MockServer> {
        let addr: SocketAddr = ([127, 0, 0, 1], port).into();
        let socket = tokio::net::TcpSocket::new_v4().map_err(|e| Error::Harness(format!("mock socket: {e}")))?;
        socket
            .set_reuseaddr(true)
            .map_err(|e| Error::Harness(format!("mock socket: {e}")))?;
        socket
            .bind(addr)
            .map_err(|e| Error::Harness(format!("mock server cannot bind {addr}: {e}")))?;
        let listener = socket
            .listen(1024)
            .map_err(|e| Error::Harness(format!("mock server cannot listen on {addr}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| Error::Harness(e.to_string()))?;
        let shared = Arc::new(Shared {
            cfg,
            started: Instant::now(),
            requests: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        });
        let app = Router::new()
            .route("/sentiment", post(handle))
            .with_state(Arc::clone(&shared));
        let (stop, stopped) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = stopped.await;
                })
                .await;
        });
        Ok(MockServer {
            addr,
            shared,
            stop: Some(stop),
            task,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Arrival times of every request, relative to server start.
    pub fn timestamps(&self) -> Vec<Duration> {
        self.shared.log.lock().expect("log lock").clone()
    }

    /// Largest number of arrivals inside any window of length `window`.
    pub fn max_in_window(&self, window: Duration) -> usize {
        let ts = self.timestamps();
        let mut best = 0;
        let mut lo = 0;
        for hi in 0..ts.len() {
            while ts[hi] - ts[lo] >= window {
                lo += 1;
            }
            best = best.max(hi - lo + 1);
        }
        best
    }

    pub async fn shutdown(mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        let _ = (&mut self.task).await;
    }
}

async fn handle(State(shared): State<Arc<Shared>>, body: Bytes) -> Response {
    shared.log.lock().expect("log lock").push(shared.started.elapsed());
    let n = shared.requests.fetch_add(1, Ordering::SeqCst);
    if n < shared.cfg.fail_first_n {
        return (StatusCode::SERVICE_UNAVAILABLE, "warming up").into_response();
    }
    let text = match serde_json::from_slice::<serde_json::Value>(&body) {
        Ok(v) => match v.get("text").and_then(|t| t.as_str()) {
            Some(t) => t.to_string(),
            None => return (StatusCode::BAD_REQUEST, "missing `text`").into_response(),
        },
        Err(_) => return (StatusCode::BAD_REQUEST, "body is not JSON").into_response(),
    };
    if shared.cfg.empty_scores_on.as_deref().is_some_and(|m| text.contains(m)) {
        return Json(json!({ "label": "POSITIVE", "scores": {} })).into_response();
    }
    let (label, scores) = score(&shared.cfg, &text);
    Json(json!({ "label": label, "scores": scores })).into_response()
}

/// Lexicon hits `(positive, negative)` over the tokenized text.
pub fn lexicon_hits(text: &str) -> (usize, usize) {
    let toks = tokenize(text);
    let pos = toks.iter().filter(|t| POSITIVE_WORDS.contains(&t.as_str())).count();
    let neg = toks.iter().filter(|t| NEGATIVE_WORDS.contains(&t.as_str())).count();
    (pos, neg)
}

fn score(cfg: &MockConfig, text: &str) -> (&'static str, serde_json::Value) {
    let binary = |p: f64| {
        let label = if p > 0.5 { "POSITIVE" } else { "NEGATIVE" };
        (label, json!({ "POSITIVE": p, "NEGATIVE": 1.0 - p }))
    };
    let neutral = || ("NEUTRAL", json!({ "POSITIVE": 0.0, "NEGATIVE": 0.0, "NEUTRAL": 1.0 }));
    match cfg.behavior {
        MockBehavior::EchoPositive => binary(1.0),
        MockBehavior::KeywordLexicon => {
            let (pos, neg) = lexicon_hits(text);
            if pos == neg {
                neutral()
            } else {
                binary(pos as f64 / (pos + neg) as f64)
            }
        }
        MockBehavior::FlipOnMarker => {
            let (pos, neg) = lexicon_hits(text);
            if pos == neg {
                return neutral();
            }
            let positive = (pos > neg) != text.contains(cfg.marker.as_str());
            binary(if positive { 1.0 } else { 0.0 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicon_counting() {
        let cfg = MockConfig::new(MockBehavior::KeywordLexicon);
        let (label, scores) = score(&cfg, "good good bad");
        assert_eq!(label, "POSITIVE");
        assert!((scores["POSITIVE"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(score(&cfg, "the soup").0, "NEUTRAL");
    }

    #[test]
    fn marker_flips() {
        let cfg = MockConfig::new(MockBehavior::FlipOnMarker);
        assert_eq!(score(&cfg, "great pizza").0, "POSITIVE");
        assert_eq!(score(&cfg, "great pizza zzflip").0, "NEGATIVE");
        assert_eq!(score(&cfg, "awful pizza zzflip").0, "POSITIVE");
    }

    #[test]
    fn behavior_names() {
        assert_eq!("flip_on_marker".parse::<MockBehavior>().unwrap(), MockBehavior::FlipOnMarker);
        assert!("nope".parse::<MockBehavior>().is_err());
    }
}
