use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use tokio::sync::{Mutex, Semaphore};
use tokio::time::Instant;

use super::{build_blackbox_report, BlackboxItem, BlackboxReport, EndpointConfig, SentimentResponse};
use crate::{Error, Result};

/// Sends are spaced so that no window of this length holds more than the
/// cap. The margin absorbs delivery jitter between client and server clocks.
const WINDOW: Duration = Duration::from_millis(1000);
const WINDOW_MARGIN: Duration = Duration::from_millis(30);

/// Sliding-window limiter: at most `cap` acquisitions per window.
pub struct RateLimiter {
    cap: usize,
    window: Duration,
    sent: Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    pub fn new(per_second: u32) -> Self {
        RateLimiter {
            cap: per_second.max(1) as usize,
            window: WINDOW + WINDOW_MARGIN,
            sent: Mutex::new(VecDeque::new()),
        }
    }

    pub async fn acquire(&self) {
        loop {
            let wait = {
                let mut sent = self.sent.lock().await;
                let now = Instant::now();
                while sent.front().is_some_and(|&t| now.duration_since(t) >= self.window) {
                    sent.pop_front();
                }
                if sent.len() < self.cap {
                    sent.push_back(now);
                    return;
                }
                self.window - now.duration_since(sent[0])
            };
            tokio::time::sleep(wait).await;
        }
    }
}

pub struct Client {
    http: reqwest::Client,
    cfg: EndpointConfig,
    token: Option<String>,
    limiter: RateLimiter,
    slots: Semaphore,
}

impl Client {
    pub fn new(cfg: EndpointConfig) -> Result<Self> {
        cfg.validate()?;
        let http = reqwest::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| Error::Transport(format!("client setup: {e}")))?;
        let token = cfg.token_env.as_deref().and_then(|v| std::env::var(v).ok());
        Ok(Client {
            http,
            limiter: RateLimiter::new(cfg.requests_per_second),
            slots: Semaphore::new(cfg.max_concurrent),
            token,
            cfg,
        })
    }

    fn url(&self) -> String {
        format!("{}/sentiment", self.cfg.base_url.trim_end_matches('/'))
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = self.cfg.backoff_base.saturating_mul(1 << attempt.min(16));
        let jitter: f64 = rand::rng().random_range(0.0..0.5);
        base + base.mul_f64(jitter)
    }

    /// One logical query: retried on 5xx, timeouts and connection errors
    /// with exponential backoff. Protocol errors are not retried.
    pub async fn query(&self, text: &str) -> Result<SentimentResponse> {
        if text.trim().is_empty() {
            return Err(Error::Protocol("empty text".into()));
        }
        let _slot = self.slots.acquire().await.expect("semaphore never closes");
        let mut last = String::new();
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                tokio::time::sleep(self.backoff(attempt - 1)).await;
            }
            self.limiter.acquire().await;
            let mut req = self.http.post(self.url()).json(&serde_json::json!({ "text": text }));
            if let Some(t) = &self.token {
                req = req.bearer_auth(t);
            }
            match req.send().await {
                Ok(resp) if resp.status().is_server_error() => last = format!("status {}", resp.status()),
                Ok(resp) if !resp.status().is_success() => {
                    return Err(Error::Protocol(format!("status {}", resp.status())));
                }
                Ok(resp) => {
                    let body = resp.text().await.map_err(|e| Error::Transport(format!("reading body: {e}")))?;
                    return SentimentResponse::parse(&body);
                }
                Err(e) if e.is_timeout() || e.is_connect() || e.is_request() => last = e.to_string(),
                Err(e) => return Err(Error::Transport(e.to_string())),
            }
        }
        Err(Error::Transport(format!(
            "gave up after {} attempts: {last}",
            self.cfg.max_retries + 1
        )))
    }

    /// Queries every text concurrently (up to the configured cap) and
    /// returns outcomes in input order.
    pub async fn query_all(self: &Arc<Self>, texts: Vec<String>) -> Vec<Result<SentimentResponse>> {
        let mut set = tokio::task::JoinSet::new();
        for (i, t) in texts.into_iter().enumerate() {
            let me = Arc::clone(self);
            set.spawn(async move { (i, me.query(&t).await) });
        }
        let mut out: Vec<(usize, Result<SentimentResponse>)> = Vec::new();
        while let Some(joined) = set.join_next().await {
            match joined {
                Ok(r) => out.push(r),
                Err(e) => panic!("query task failed: {e}"),
            }
        }
        out.sort_by_key(|(i, _)| *i);
        out.into_iter().map(|(_, r)| r).collect()
    }

    /// Queries both sides of every item and builds the report, whatever the
    /// number of failures.
    pub async fn evaluate(self: &Arc<Self>, items: &[BlackboxItem]) -> Result<BlackboxReport> {
        let texts = items
            .iter()
            .flat_map(|it| [it.original.clone(), it.adversarial.clone()])
            .collect();
        let mut flat = self.query_all(texts).await.into_iter();
        let mut outcomes = Vec::with_capacity(items.len());
        while let (Some(o), Some(a)) = (flat.next(), flat.next()) {
            outcomes.push((o, a));
        }
        build_blackbox_report(items, &outcomes)
    }
}

/// Evaluates attack pairs against the endpoint. Fails when no pair could be
/// scored at all.
pub async fn blackbox_eval(cfg: EndpointConfig, items: &[BlackboxItem]) -> Result<BlackboxReport> {
    let client = Arc::new(Client::new(cfg)?);
    let report = client.evaluate(items).await?;
    if report.n_scored_pairs == 0 {
        return Err(Error::Harness(format!("all {} queries failed", report.n_queries)));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test(start_paused = true)]
    async fn limiter_spaces_bursts() {
        let lim = RateLimiter::new(3);
        let t0 = Instant::now();
        let mut times = Vec::new();
        for _ in 0..7 {
            lim.acquire().await;
            times.push(t0.elapsed());
        }
        for w in times.windows(4) {
            assert!(w[3] - w[0] >= WINDOW, "{times:?}");
        }
        assert!(times[2] < Duration::from_millis(1));
    }
}
