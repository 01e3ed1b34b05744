//! Provider-agnostic chat-completion client.
//!
//! A [`Gateway`] wraps one [`ChatProvider`] adapter with exponential
//! backoff on transient failures and a hard cap on in-flight requests.
//! Adapters map `(system, user, temperature)` onto a provider's wire format;
//! offline adapters (scripted, transcript-backed, synthetic) make the whole
//! pipeline runnable without network access.

mod http;
mod scripted;
mod transcript;

use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpProvider, WireFormat};
pub use scripted::{FnProvider, ScriptedProvider, TranscriptProvider};
pub use transcript::{read_transcript, ChatExchange, TranscriptError, TranscriptLog};

/// Which adapter backs a provider entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    /// OpenAI-compatible `/chat/completions`.
    Openai,
    /// Anthropic `/v1/messages`.
    Anthropic,
    /// Offline replies from a history-free expected-value heuristic.
    Synthetic,
    /// Replays recorded transcripts.
    Transcript,
    /// Offline keyword grader for reasoning passages.
    HeuristicGrader,
}

impl AdapterKind {
    pub fn is_offline(self) -> bool {
        !matches!(self, AdapterKind::Openai | AdapterKind::Anthropic)
    }
}

fn default_temperature() -> f64 {
    0.7
}
fn default_max_output_tokens() -> u32 {
    1024
}
fn default_timeout() -> u64 {
    120
}
fn default_max_retries() -> u32 {
    3
}
fn default_concurrency() -> usize {
    4
}
fn default_backoff_base() -> u64 {
    500
}
fn default_backoff_max() -> u64 {
    30_000
}

/// One provider/model endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    /// Filled from the config table key when omitted.
    #[serde(default)]
    pub provider_id: String,
    pub adapter: AdapterKind,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default)]
    pub model_id: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_concurrency")]
    pub concurrent_request_limit: usize,
    #[serde(default = "default_backoff_base")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_backoff_max")]
    pub backoff_max_ms: u64,
    /// Transcript file or directory for the transcript adapter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<PathBuf>,
}

impl ProviderConfig {
    /// A config for an offline adapter with no backoff delay.
    pub fn offline(provider_id: impl Into<String>, adapter: AdapterKind) -> Self {
        Self {
            provider_id: provider_id.into(),
            adapter,
            endpoint: String::new(),
            model_id: String::new(),
            temperature: default_temperature(),
            max_output_tokens: default_max_output_tokens(),
            api_key_env: None,
            request_timeout_secs: default_timeout(),
            max_retries: default_max_retries(),
            concurrent_request_limit: default_concurrency(),
            backoff_base_ms: 0,
            backoff_max_ms: 0,
            transcript: None,
        }
    }

    /// `provider/model`, the grouping key used in reports.
    pub fn model_key(&self) -> String {
        if self.model_id.is_empty() {
            self.provider_id.clone()
        } else {
            format!("{}/{}", self.provider_id, self.model_id)
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if !(0.0..=2.0).contains(&self.temperature) {
            issues.push(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.concurrent_request_limit == 0 {
            issues.push("concurrent_request_limit must be at least 1".to_string());
        }
        if !self.adapter.is_offline() {
            if self.endpoint.is_empty() {
                issues.push("endpoint is required for network adapters".to_string());
            }
            if self.model_id.is_empty() {
                issues.push("model_id is required for network adapters".to_string());
            }
            if self.api_key_env.is_none() {
                issues.push("api_key_env is required for network adapters".to_string());
            }
        }
        if self.adapter == AdapterKind::Transcript && self.transcript.is_none() {
            issues.push("transcript path is required for the transcript adapter".to_string());
        }
        issues
    }

    /// Delay before retry number `attempt` (0-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.min(30)).unwrap_or(u64::MAX);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor).min(self.backoff_max_ms))
    }
}

/// A single chat request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderReply {
    pub text: String,
    pub usage: Option<Usage>,
}

impl From<String> for ProviderReply {
    fn from(text: String) -> Self {
        Self { text, usage: None }
    }
}

impl From<&str> for ProviderReply {
    fn from(text: &str) -> Self {
        text.to_string().into()
    }
}

/// Failure reported by an adapter.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    /// Worth retrying: timeouts, connection failures, 429 and 5xx.
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("provider error: {0}")]
    Fatal(String),
}

/// Wire-format adapter.
pub trait ChatProvider: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<ProviderReply, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider error: {0}")]
    Provider(String),
}

/// Source of timestamps for transcripts.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Always returns the same instant; keeps offline transcripts byte-stable.
#[derive(Debug, Default)]
pub struct FrozenClock(pub u64);

impl Clock for FrozenClock {
    fn now_ms(&self) -> u64 {
        self.0
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
pub struct ConcurrencyLimiter {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a ConcurrencyLimiter,
}

impl ConcurrencyLimiter {
    pub fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit { limiter: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.limiter.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.limiter.freed.notify_one();
    }
}

/// Result of a successful completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    /// Transport retries before success.
    pub retries: u32,
    pub started_ms: u64,
    pub latency_ms: u64,
    pub usage: Option<Usage>,
}

/// Retrying, rate-limited client for one provider.
pub struct Gateway {
    config: ProviderConfig,
    provider: Arc<dyn ChatProvider>,
    limiter: Arc<ConcurrencyLimiter>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(config: ProviderConfig, provider: Arc<dyn ChatProvider>) -> Self {
        let clock: Arc<dyn Clock> = if config.adapter.is_offline() {
            Arc::new(FrozenClock(0))
        } else {
            Arc::new(SystemClock)
        };
        Self {
            limiter: Arc::new(ConcurrencyLimiter::new(config.concurrent_request_limit)),
            config,
            provider,
            clock,
        }
    }

    /// Shares an in-flight cap with other gateways for the same provider.
    pub fn with_limiter(mut self, limiter: Arc<ConcurrencyLimiter>) -> Self {
        self.limiter = limiter;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    /// Builds a network gateway; see [`network_provider`].
    pub fn connect(config: ProviderConfig) -> Result<Self, GatewayError> {
        let provider = network_provider(&config)?;
        Ok(Self::new(config, Arc::new(provider)))
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    /// Sends one chat request, retrying transient failures with exponential
    /// backoff up to `max_retries` times.
    pub fn complete(&self, system: &str, user: &str) -> Result<Completion, GatewayError> {
        let request = ChatRequest {
            model_id: self.config.model_id.clone(),
            system: system.to_string(),
            user: user.to_string(),
            temperature: self.config.temperature,
            max_output_tokens: self.config.max_output_tokens,
        };
        let mut attempt = 0u32;
        loop {
            let started_ms = self.clock.now_ms();
            let outcome = {
                let _permit = self.limiter.acquire();
                self.provider.send(&request)
            };
            match outcome {
                Ok(reply) => {
                    let latency_ms = self.clock.now_ms().saturating_sub(started_ms);
                    return Ok(Completion {
                        text: reply.text,
                        retries: attempt,
                        started_ms,
                        latency_ms,
                        usage: reply.usage,
                    });
                }
                Err(ProviderError::Transient(message)) => {
                    if attempt >= self.config.max_retries {
                        return Err(GatewayError::Transport {
                            attempts: attempt + 1,
                            message,
                        });
                    }
                    let delay = self.config.backoff(attempt);
                    log::warn!(
                        "{}: transient failure ({message}), retrying in {delay:?}",
                        self.config.provider_id
                    );
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(ProviderError::Auth(message)) => return Err(GatewayError::Auth(message)),
                Err(ProviderError::Fatal(message)) => return Err(GatewayError::Provider(message)),
            }
        }
    }
}

/// Builds the HTTP adapter for a network provider, reading the API key from
/// the configured environment variable. Fails before any request is issued
/// when the configuration is incomplete or the secret is missing.
pub fn network_provider(config: &ProviderConfig) -> Result<HttpProvider, GatewayError> {
    let issues = config.validate();
    if !issues.is_empty() {
        return Err(GatewayError::Config(format!(
            "provider {}: {}",
            config.provider_id,
            issues.join("; ")
        )));
    }
    let format = match config.adapter {
        AdapterKind::Openai => WireFormat::OpenAiChat,
        AdapterKind::Anthropic => WireFormat::AnthropicMessages,
        other => {
            return Err(GatewayError::Config(format!(
                "adapter {other:?} is not a network adapter"
            )))
        }
    };
    let var = config.api_key_env.as_deref().unwrap_or_default();
    let key = std::env::var(var).map_err(|_| {
        GatewayError::Config(format!(
            "provider {}: environment variable {var} is not set",
            config.provider_id
        ))
    })?;
    HttpProvider::new(
        format,
        config.endpoint.clone(),
        key,
        Duration::from_secs(config.request_timeout_secs),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn offline() -> ProviderConfig {
        ProviderConfig::offline("mock", AdapterKind::Synthetic)
    }

    #[test]
    fn scripted_reply_passes_through() {
        let gw = Gateway::new(offline(), Arc::new(ScriptedProvider::new(vec![Ok("hello".into())])));
        let c = gw.complete("s", "u").unwrap();
        assert_eq!(c.text, "hello");
        assert_eq!(c.retries, 0);
    }

    #[test]
    fn retries_transient_failures() {
        let script = vec![
            Err(ProviderError::Transient("503".into())),
            Err(ProviderError::Transient("timeout".into())),
            Ok("ok".into()),
        ];
        let gw = Gateway::new(offline(), Arc::new(ScriptedProvider::new(script)));
        let c = gw.complete("s", "u").unwrap();
        assert_eq!(c.text, "ok");
        assert_eq!(c.retries, 2);
    }

    #[test]
    fn gives_up_after_max_retries() {
        let mut cfg = offline();
        cfg.max_retries = 1;
        let calls = Arc::new(AtomicUsize::new(0));
        let seen = calls.clone();
        let provider = FnProvider::new(move |_| {
            seen.fetch_add(1, Ordering::SeqCst);
            Err(ProviderError::Transient("down".into()))
        });
        let gw = Gateway::new(cfg, Arc::new(provider));
        let err = gw.complete("s", "u").unwrap_err();
        assert_eq!(
            err,
            GatewayError::Transport {
                attempts: 2,
                message: "down".into()
            }
        );
        assert_eq!(calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn auth_failures_are_not_retried() {
        let script = vec![Err(ProviderError::Auth("401".into())), Ok("never".into())];
        let gw = Gateway::new(offline(), Arc::new(ScriptedProvider::new(script)));
        assert!(matches!(gw.complete("s", "u"), Err(GatewayError::Auth(_))));
    }

    #[test]
    fn missing_secret_is_a_config_error() {
        let cfg = ProviderConfig {
            adapter: AdapterKind::Openai,
            endpoint: "http://127.0.0.1:9/v1/chat/completions".into(),
            model_id: "m".into(),
            api_key_env: Some("HERDSIM_TEST_SURELY_UNSET_KEY".into()),
            ..ProviderConfig::offline("net", AdapterKind::Openai)
        };
        let err = Gateway::connect(cfg).unwrap_err();
        assert!(matches!(err, GatewayError::Config(ref m) if m.contains("HERDSIM_TEST_SURELY_UNSET_KEY")));
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let cfg = ProviderConfig {
            backoff_base_ms: 100,
            backoff_max_ms: 1000,
            ..offline()
        };
        assert_eq!(cfg.backoff(0), Duration::from_millis(100));
        assert_eq!(cfg.backoff(1), Duration::from_millis(200));
        assert_eq!(cfg.backoff(3), Duration::from_millis(800));
        assert_eq!(cfg.backoff(4), Duration::from_millis(1000));
        assert_eq!(cfg.backoff(80), Duration::from_millis(1000));
    }

    #[test]
    fn concurrency_cap_is_respected() {
        let mut cfg = offline();
        cfg.concurrent_request_limit = 3;
        let current = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let (c, p) = (current.clone(), peak.clone());
        let provider = FnProvider::new(move |_| {
            let now = c.fetch_add(1, Ordering::SeqCst) + 1;
            p.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(5));
            c.fetch_sub(1, Ordering::SeqCst);
            Ok("x".into())
        });
        let gw = Gateway::new(cfg, Arc::new(provider));
        std::thread::scope(|s| {
            for _ in 0..16 {
                s.spawn(|| gw.complete("s", "u").unwrap());
            }
        });
        let peak = peak.load(Ordering::SeqCst);
        assert!(peak <= 3, "peak in-flight {peak}");
        assert!(peak >= 2, "requests never overlapped");
    }
}
