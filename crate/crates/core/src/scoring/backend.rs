use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;
use std::time::Duration;

use serde::Deserialize;

use super::{ScoreSource, MAX_SCORE, MIN_SCORE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FetchError {
    /// The account does not exist or is protected; never retried.
    #[error("account is unscorable (status {status})")]
    Unscorable { status: u16 },
    /// Transient failure; the account goes back in the pending queue.
    #[error("scoring service unavailable: {0}")]
    Unavailable(String),
}

/// One request to the scoring service per call.
pub trait ScoreBackend: Send + Sync {
    fn fetch(&self, account_id: &str) -> Result<f64, FetchError>;

    fn source(&self) -> ScoreSource;
}

/// Returns fixture ground-truth scores. Unknown accounts are unscorable.
#[derive(Debug, Default)]
pub struct MockBackend {
    scores: RwLock<HashMap<String, f64>>,
    requests: AtomicU64,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, account_id: impl Into<String>, score: f64) {
        self.scores.write().unwrap().insert(account_id.into(), score);
    }

    pub fn register_all<'a>(&self, scores: impl IntoIterator<Item = (&'a String, &'a f64)>) {
        let mut map = self.scores.write().unwrap();
        for (k, v) in scores {
            map.insert(k.clone(), *v);
        }
    }

    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }
}

impl ScoreBackend for MockBackend {
    fn fetch(&self, account_id: &str) -> Result<f64, FetchError> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        self.scores
            .read()
            .unwrap()
            .get(account_id)
            .copied()
            .ok_or(FetchError::Unscorable { status: 404 })
    }

    fn source(&self) -> ScoreSource {
        ScoreSource::Mock
    }
}

#[derive(Debug, Deserialize)]
struct ScoreResponse {
    user_id: String,
    score: f64,
}

/// Client for `GET {endpoint}/score?user_id=<id>`, answered with
/// `{"user_id": "...", "score": <0..5>}`.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
}

impl HttpBackend {
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self, FetchError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| FetchError::Unavailable(e.to_string()))?;
        Ok(Self { client, endpoint: endpoint.trim_end_matches('/').to_string() })
    }
}

impl ScoreBackend for HttpBackend {
    fn fetch(&self, account_id: &str) -> Result<f64, FetchError> {
        let resp = self
            .client
            .get(format!("{}/score", self.endpoint))
            .query(&[("user_id", account_id)])
            .send()
            .map_err(|e| FetchError::Unavailable(e.to_string()))?;
        let status = resp.status();
        // 429 means our quota upstream ran dry, which is transient.
        if status.is_client_error() && status.as_u16() != 429 {
            return Err(FetchError::Unscorable { status: status.as_u16() });
        }
        if !status.is_success() {
            return Err(FetchError::Unavailable(format!("status {status}")));
        }
        let body: ScoreResponse = resp
            .json()
            .map_err(|e| FetchError::Unavailable(format!("bad response body: {e}")))?;
        if body.user_id != account_id {
            return Err(FetchError::Unavailable(format!(
                "response for `{}` while asking for `{account_id}`",
                body.user_id
            )));
        }
        if !(MIN_SCORE..=MAX_SCORE).contains(&body.score) {
            return Err(FetchError::Unavailable(format!("score {} out of range", body.score)));
        }
        Ok(body.score)
    }

    fn source(&self) -> ScoreSource {
        ScoreSource::Service
    }
}
