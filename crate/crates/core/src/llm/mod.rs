//! LLM access: prompt submission with caching, retries and rate limiting,
//! plus verdict parsing.

mod cache;
mod parse;
mod provider;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use cache::{CacheEntry, ResponseCache};
pub use parse::parse_verdict;
pub(crate) use provider::{api_key, http_client, post_json};
pub use provider::{
    build_provider, AttemptError, GeminiCompatible, MockProvider, OpenAiCompatible, Provider, ResponderEntry,
    GEMINI_DEFAULT_BASE, GEMINI_KEY_VAR, OPENAI_DEFAULT_BASE, OPENAI_KEY_VAR,
};

use crate::digest::{sha256_fields, sha256_hex};
use crate::exec::Exec;
use crate::label::VerdictLabel;
use crate::prompt::PromptVariant;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("prompt rejected as too large: {0}")]
    PromptTooLarge(String),
    #[error("unexpected provider response: {0}")]
    BadResponse(String),
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    OpenaiCompatible,
    GeminiCompatible,
    Mock,
}

impl ProviderKind {
    pub fn name(self) -> &'static str {
        match self {
            ProviderKind::OpenaiCompatible => "openai_compatible",
            ProviderKind::GeminiCompatible => "gemini_compatible",
            ProviderKind::Mock => "mock",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub provider: ProviderKind,
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub base_url: Option<String>,
    /// Responder table for the mock provider.
    pub responder: Option<PathBuf>,
    /// Token-bucket refill rate; zero or negative disables limiting.
    pub requests_per_second: f64,
    pub max_in_flight: usize,
    pub backoff_base_ms: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Mock,
            model_id: "mock".to_string(),
            temperature: 0.0,
            max_output_tokens: 1024,
            timeout_secs: 60,
            max_retries: 3,
            base_url: None,
            responder: None,
            requests_per_second: 2.0,
            max_in_flight: 4,
            backoff_base_ms: 500,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::Config("temperature must be >= 0".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::Config("max_output_tokens must be positive".into()));
        }
        if self.provider == ProviderKind::Mock && self.responder.is_none() {
            return Err(LlmError::Config("mock provider requires a responder file".into()));
        }
        Ok(())
    }

    /// Cache key: provider, model, temperature and prompt.
    pub fn cache_key(&self, prompt: &str) -> String {
        let temperature = format!("{:?}", self.temperature);
        sha256_fields([self.provider.name(), self.model_id.as_str(), temperature.as_str(), prompt])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictSource {
    pub provider: ProviderKind,
    pub model_id: String,
    pub variant: PromptVariant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: VerdictLabel,
    pub reasoning: Option<String>,
    pub raw: String,
    pub source: VerdictSource,
    pub latency_ms: u64,
    pub cached: bool,
}

/// Token bucket: holds up to `max(1, rate)` tokens refilled at `rate`/s.
pub struct RateLimiter {
    rate: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(rate: f64) -> Self {
        Self { rate, state: Mutex::new((rate.max(1.0), Instant::now())) }
    }

    pub fn acquire(&self) {
        if self.rate <= 0.0 {
            return;
        }
        let capacity = self.rate.max(1.0);
        loop {
            let wait = {
                let mut st = self.state.lock().expect("limiter lock poisoned");
                let now = Instant::now();
                st.0 = (st.0 + now.duration_since(st.1).as_secs_f64() * self.rate).min(capacity);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                (1.0 - st.0) / self.rate
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

/// One model behind a cache, a rate limiter and a retry policy.
pub struct Gateway {
    cfg: ModelConfig,
    provider: Box<dyn Provider>,
    cache: Arc<ResponseCache>,
    limiter: RateLimiter,
    inflight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Gateway {
    pub fn new(cfg: ModelConfig, cache: Arc<ResponseCache>) -> Result<Self, LlmError> {
        cfg.validate()?;
        let provider = build_provider(&cfg)?;
        Ok(Self::with_provider(cfg, provider, cache))
    }

    pub fn with_provider(cfg: ModelConfig, provider: Box<dyn Provider>, cache: Arc<ResponseCache>) -> Self {
        Self {
            limiter: RateLimiter::new(cfg.requests_per_second),
            cfg,
            provider,
            cache,
            inflight: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn provider_requests(&self) -> usize {
        self.provider.requests()
    }

    fn verdict(&self, raw: String, variant: PromptVariant, latency_ms: u64, cached: bool) -> Verdict {
        let (label, reasoning) = parse_verdict(&raw, variant.expects_reasoning());
        Verdict {
            label,
            reasoning,
            raw,
            source: VerdictSource { provider: self.cfg.provider, model_id: self.cfg.model_id.clone(), variant },
            latency_ms,
            cached,
        }
    }

    /// Classify one rendered prompt.
    pub fn classify(&self, prompt: &str, variant: PromptVariant) -> Result<Verdict, LlmError> {
        if prompt.is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        let key = self.cfg.cache_key(prompt);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(self.verdict(hit.raw, variant, 0, true));
        }

        // Identical prompts racing each other send one request.
        let slot = self.inflight.lock().expect("inflight lock poisoned").entry(key.clone()).or_default().clone();
        let _guard = slot.lock().expect("slot lock poisoned");
        if let Some(hit) = self.cache.get(&key) {
            return Ok(self.verdict(hit.raw, variant, 0, true));
        }

        let started = Instant::now();
        let raw = self.request_with_retries(prompt)?;
        let latency_ms = started.elapsed().as_millis() as u64;
        self.cache.put(self.cfg.provider.name(), &key, &self.cfg.model_id, &sha256_hex(prompt), &raw)?;
        self.inflight.lock().expect("inflight lock poisoned").remove(&key);
        Ok(self.verdict(raw, variant, latency_ms, false))
    }

    fn request_with_retries(&self, prompt: &str) -> Result<String, LlmError> {
        let mut last = String::new();
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                let backoff = self.cfg.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(backoff.min(30_000)));
            }
            if self.provider.rate_limited() {
                self.limiter.acquire();
            }
            match self.provider.complete(prompt, &self.cfg) {
                Ok(raw) => return Ok(raw),
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Transient(msg)) => {
                    tracing::warn!(attempt, error = %msg, model = %self.cfg.model_id, "request failed");
                    last = msg;
                }
            }
        }
        Err(LlmError::ProviderUnavailable(format!(
            "{} failed after {} attempts: {last}",
            self.cfg.model_id,
            self.cfg.max_retries + 1
        )))
    }

    /// Classify many prompts with at most `max_in_flight` concurrent
    /// requests; results keep input order.
    pub fn classify_batch(
        &self,
        prompts: &[String],
        variant: PromptVariant,
        exec: Exec,
    ) -> Vec<Result<Verdict, LlmError>> {
        exec.map_bounded(prompts, self.cfg.max_in_flight.max(1), |p| self.classify(p, variant))
    }
}

pub fn classify_change(prompt: &str, gateway: &Gateway, variant: PromptVariant) -> Result<Verdict, LlmError> {
    gateway.classify(prompt, variant)
}

/// Tally of verdicts by label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictTally {
    pub buggy: usize,
    pub notbuggy: usize,
    pub unparseable: usize,
}

impl VerdictTally {
    pub fn from_verdicts<'a>(verdicts: impl IntoIterator<Item = &'a Verdict>) -> Self {
        let mut t = Self::default();
        for v in verdicts {
            match v.label {
                VerdictLabel::Buggy => t.buggy += 1,
                VerdictLabel::NotBuggy => t.notbuggy += 1,
                VerdictLabel::Unparseable => t.unparseable += 1,
            }
        }
        t
    }
}
