//! Chat-completion client: pluggable transports, retries with exponential
//! backoff, a token-bucket rate limiter and an append-only transcript that
//! can be replayed without network access.

#[cfg(feature = "http")]
mod http;
mod memorize;
mod profiles;
mod transcript;
mod transports;

#[cfg(feature = "http")]
pub use http::HttpTransport;
pub use memorize::{
    align_cells, header_test, row_completion_test, score_rows, CellOutcome, MemorizationReport, MemorizeError, ProbeConfig,
    DEFAULT_PROMPT_ROWS,
};
pub use profiles::{profile, profiles, EndpointProfile, Provider};
pub use transcript::{Transcript, TranscriptEntry};
pub use transports::{FnTransport, ReplayTransport, ScriptedTransport};

use serde::{Deserialize, Serialize};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    /// User turns in order.
    pub user: Vec<String>,
    pub max_tokens: u32,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, system: impl Into<String>, user: impl Into<String>) -> Self {
        Self { model: model.into(), system: system.into(), user: vec![user.into()], max_tokens: 4096, temperature: 0.0, seed: None }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.user.is_empty() {
            return Err(LlmError::InvalidRequest("at least one user turn is required".into()));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(LlmError::InvalidRequest(format!("temperature {} is negative", self.temperature)));
        }
        Ok(())
    }

    /// Stable identity used to match replayed responses.
    pub fn key(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Usage,
}

impl ChatResponse {
    /// Response with token counts estimated at four characters per token.
    pub fn estimated(req: &ChatRequest, text: impl Into<String>) -> Self {
        let text = text.into();
        let prompt: usize = req.system.len() + req.user.iter().map(String::len).sum::<usize>();
        let usage = Usage { prompt_tokens: prompt.div_ceil(4) as u64, completion_tokens: text.len().div_ceil(4) as u64 };
        Self { text, usage }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransportError {
    /// Worth retrying: timeouts, rate limiting, server errors.
    #[error("transient: {0}")]
    Transient(String),
    #[error("authentication: {0}")]
    Auth(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("{0}")]
    Fatal(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("gave up after {attempts} attempts: {last}")]
    CapExceeded { attempts: usize, last: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("configuration: {0}")]
    Config(String),
}

pub trait Transport: Send + Sync {
    fn send(&self, req: &ChatRequest, timeout: Duration) -> Result<ChatResponse, TransportError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts including the first.
    pub max_attempts: usize,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: usize) -> Self {
        Self { max_attempts, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    /// Delay before attempt `attempt + 1`, doubling from the base.
    pub fn delay(&self, attempt: usize) -> Duration {
        let factor = 1u32 << (attempt.saturating_sub(1)).min(16);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 5, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(30) }
    }
}

/// Token bucket: up to `capacity` requests in a burst, refilled at `per_second`.
#[derive(Debug)]
pub struct RateLimiter {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(capacity: u32, per_second: f64) -> Self {
        let capacity = capacity.max(1) as f64;
        Self { capacity, per_second, state: Mutex::new((capacity, Instant::now())) }
    }

    /// Time to wait before a token is available; takes the token when zero.
    pub fn try_acquire(&self) -> Duration {
        let mut st = self.state.lock().unwrap();
        let now = Instant::now();
        let refill = now.duration_since(st.1).as_secs_f64() * self.per_second;
        st.0 = (st.0 + refill).min(self.capacity);
        st.1 = now;
        if st.0 >= 1.0 {
            st.0 -= 1.0;
            Duration::ZERO
        } else if self.per_second > 0.0 {
            Duration::from_secs_f64((1.0 - st.0) / self.per_second)
        } else {
            Duration::from_secs(1)
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = self.try_acquire();
            if wait.is_zero() {
                return;
            }
            std::thread::sleep(wait);
        }
    }
}

/// Shareable chat client. Every attempt, failed or not, is appended to the transcript.
pub struct LlmClient {
    transport: Arc<dyn Transport>,
    pub retry: RetryPolicy,
    pub timeout: Duration,
    limiter: Option<RateLimiter>,
    transcript: Option<Arc<Transcript>>,
}

impl LlmClient {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self { transport, retry: RetryPolicy::default(), timeout: Duration::from_secs(120), limiter: None, transcript: None }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, limiter: RateLimiter) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn with_transcript(mut self, transcript: Arc<Transcript>) -> Self {
        self.transcript = Some(transcript);
        self
    }

    pub fn transcript(&self) -> Option<&Arc<Transcript>> {
        self.transcript.as_ref()
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let cap = self.retry.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=cap {
            if let Some(l) = &self.limiter {
                l.acquire();
            }
            let result = self.transport.send(req, self.timeout);
            if let Some(t) = &self.transcript {
                t.append(TranscriptEntry::new(req, attempt, &result));
            }
            match result {
                Ok(resp) => return Ok(resp),
                Err(TransportError::Transient(msg)) => last = msg,
                Err(TransportError::Auth(msg)) => return Err(LlmError::Auth(msg)),
                Err(TransportError::Malformed(msg)) => return Err(LlmError::Malformed(msg)),
                Err(TransportError::Fatal(msg)) => return Err(LlmError::Transport(msg)),
            }
            if attempt < cap {
                let d = self.retry.delay(attempt);
                if !d.is_zero() {
                    std::thread::sleep(d);
                }
            }
        }
        Err(LlmError::CapExceeded { attempts: cap, last })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn req() -> ChatRequest {
        ChatRequest::new("m", "sys", "hello")
    }

    #[test]
    fn canned_reply() {
        let t = Arc::new(Transcript::in_memory());
        let c = LlmClient::new(Arc::new(FnTransport::new(|r, _| Ok(ChatResponse::estimated(r, "canned")))))
            .with_transcript(t.clone());
        assert_eq!(c.complete(&req()).unwrap().text, "canned");
        assert_eq!(t.entries().len(), 1);
    }

    #[test]
    fn transient_failures_are_retried_up_to_cap() {
        let calls = Arc::new(AtomicUsize::new(0));
        let k = calls.clone();
        let flaky = FnTransport::new(move |r, _| {
            if k.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(TransportError::Transient("503".into()))
            } else {
                Ok(ChatResponse::estimated(r, "ok"))
            }
        });
        let t = Arc::new(Transcript::in_memory());
        let c = LlmClient::new(Arc::new(flaky)).with_retry(RetryPolicy::no_delay(3)).with_transcript(t.clone());
        assert_eq!(c.complete(&req()).unwrap().text, "ok");
        let attempts: Vec<usize> = t.entries().iter().map(|e| e.attempt).collect();
        assert_eq!(attempts, vec![1, 2, 3]);

        let down = FnTransport::new(|_, _| Err(TransportError::Transient("timeout".into())));
        let t = Arc::new(Transcript::in_memory());
        let c = LlmClient::new(Arc::new(down)).with_retry(RetryPolicy::no_delay(3)).with_transcript(t.clone());
        assert_eq!(c.complete(&req()), Err(LlmError::CapExceeded { attempts: 3, last: "timeout".into() }));
        assert_eq!(t.entries().len(), 3);
    }

    #[test]
    fn auth_errors_are_not_retried() {
        let t = Arc::new(Transcript::in_memory());
        let c = LlmClient::new(Arc::new(FnTransport::new(|_, _| Err(TransportError::Auth("401".into())))))
            .with_retry(RetryPolicy::no_delay(5))
            .with_transcript(t.clone());
        assert_eq!(c.complete(&req()), Err(LlmError::Auth("401".into())));
        assert_eq!(t.entries().len(), 1);
    }

    #[test]
    fn request_validation() {
        let mut r = req();
        r.user.clear();
        assert!(matches!(r.validate(), Err(LlmError::InvalidRequest(_))));
        let mut r = req();
        r.max_tokens = 0;
        assert!(r.validate().is_err());
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy { max_attempts: 5, base_delay: Duration::from_millis(100), max_delay: Duration::from_millis(350) };
        let d: Vec<u128> = (1..=4).map(|a| p.delay(a).as_millis()).collect();
        assert_eq!(d, vec![100, 200, 350, 350]);
    }

    #[test]
    fn token_bucket_bursts_then_waits() {
        let l = RateLimiter::new(2, 1.0);
        assert!(l.try_acquire().is_zero());
        assert!(l.try_acquire().is_zero());
        let wait = l.try_acquire();
        assert!(wait > Duration::from_millis(900) && wait <= Duration::from_secs(1));
    }
}
