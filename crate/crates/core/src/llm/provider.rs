//! Completion and embedding backends.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{LlmError, ModelConfig, ProviderKind};
use crate::digest::sha256_hex;

pub const OPENAI_KEY_VAR: &str = "UNTANGLE_OPENAI_KEY";
pub const GEMINI_KEY_VAR: &str = "UNTANGLE_GEMINI_KEY";
pub const OPENAI_DEFAULT_BASE: &str = "https://api.openai.com/v1";
pub const GEMINI_DEFAULT_BASE: &str = "https://generativelanguage.googleapis.com/v1beta";

/// Failure of a single request attempt.
#[derive(Debug)]
pub enum AttemptError {
    /// Worth retrying (timeouts, 429, 5xx).
    Transient(String),
    Fatal(LlmError),
}

pub trait Provider: Send + Sync {
    fn complete(&self, prompt: &str, cfg: &ModelConfig) -> Result<String, AttemptError>;

    /// Requests actually sent; cache hits never reach the provider.
    fn requests(&self) -> usize;

    fn rate_limited(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponderEntry {
    pub prompt_sha256: String,
    pub response: String,
}

/// Offline provider answering from a table keyed by prompt SHA-256.
#[derive(Default)]
pub struct MockProvider {
    responses: HashMap<String, String>,
    fallback: Option<String>,
    count: AtomicUsize,
}

impl MockProvider {
    pub fn new(entries: impl IntoIterator<Item = ResponderEntry>) -> Self {
        Self {
            responses: entries.into_iter().map(|e| (e.prompt_sha256, e.response)).collect(),
            fallback: None,
            count: AtomicUsize::new(0),
        }
    }

    /// Response used for prompts missing from the table.
    pub fn with_fallback(mut self, response: impl Into<String>) -> Self {
        self.fallback = Some(response.into());
        self
    }

    pub fn from_jsonl(path: &Path) -> Result<Self, LlmError> {
        let file = std::fs::File::open(path)
            .map_err(|e| LlmError::Config(format!("cannot open responder {}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (k, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ResponderEntry =
                serde_json::from_str(&line).map_err(|e| LlmError::Config(format!("responder line {}: {e}", k + 1)))?;
            entries.push(entry);
        }
        Ok(Self::new(entries))
    }
}

impl Provider for MockProvider {
    fn complete(&self, prompt: &str, _cfg: &ModelConfig) -> Result<String, AttemptError> {
        self.count.fetch_add(1, Ordering::SeqCst);
        let sha = sha256_hex(prompt);
        self.responses.get(&sha).or(self.fallback.as_ref()).cloned().ok_or_else(|| {
            AttemptError::Fatal(LlmError::ProviderUnavailable(format!("mock responder has no entry for prompt {sha}")))
        })
    }

    fn requests(&self) -> usize {
        self.count.load(Ordering::SeqCst)
    }

    fn rate_limited(&self) -> bool {
        false
    }
}

pub(crate) fn http_client(timeout: Duration) -> Result<reqwest::blocking::Client, LlmError> {
    reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| LlmError::Config(format!("http client: {e}")))
}

pub(crate) fn api_key(var: &str) -> Result<String, LlmError> {
    std::env::var(var).map_err(|_| LlmError::AuthFailure(format!("environment variable {var} is not set")))
}

/// POST a JSON body and classify the outcome.
pub(crate) fn post_json(
    client: &reqwest::blocking::Client,
    url: &str,
    headers: &[(&str, String)],
    body: &Value,
) -> Result<Value, AttemptError> {
    let mut req = client.post(url).json(body);
    for (name, value) in headers {
        req = req.header(*name, value);
    }
    let resp = req.send().map_err(|e| AttemptError::Transient(e.to_string()))?;
    let status = resp.status();
    let text = resp.text().map_err(|e| AttemptError::Transient(e.to_string()))?;
    if status.is_success() {
        return serde_json::from_str(&text)
            .map_err(|e| AttemptError::Fatal(LlmError::BadResponse(format!("invalid JSON: {e}"))));
    }
    let code = status.as_u16();
    let lowered = text.to_lowercase();
    Err(match code {
        401 | 403 => AttemptError::Fatal(LlmError::AuthFailure(format!("HTTP {code}"))),
        413 => AttemptError::Fatal(LlmError::PromptTooLarge(format!("HTTP {code}"))),
        400 if ["context length", "context_length", "too long", "maximum", "token limit"]
            .iter()
            .any(|m| lowered.contains(m)) =>
        {
            AttemptError::Fatal(LlmError::PromptTooLarge(text.chars().take(200).collect()))
        }
        408 | 429 | 500..=599 => AttemptError::Transient(format!("HTTP {code}")),
        _ => AttemptError::Fatal(LlmError::BadResponse(format!(
            "HTTP {code}: {}",
            text.chars().take(200).collect::<String>()
        ))),
    })
}

pub struct OpenAiCompatible {
    client: reqwest::blocking::Client,
    base_url: String,
    key: String,
    count: AtomicUsize,
}

impl OpenAiCompatible {
    pub fn new(cfg: &ModelConfig) -> Result<Self, LlmError> {
        Ok(Self {
            client: http_client(Duration::from_secs(cfg.timeout_secs))?,
            base_url: cfg.base_url.clone().unwrap_or_else(|| OPENAI_DEFAULT_BASE.to_string()),
            key: api_key(OPENAI_KEY_VAR)?,
            count: AtomicUsize::new(0),
        })
    }

    pub fn with_key(cfg: &ModelConfig, key: &str) -> Result<Self, LlmError> {
        Ok(Self {
            client: http_client(Duration::from_secs(cfg.timeout_secs))?,
            base_url: cfg.base_url.clone().unwrap_or_else(|| OPENAI_DEFAULT_BASE.to_string()),
            key: key.to_string(),
            count: AtomicUsize::new(0),
        })
    }
}

impl Provider for OpenAiCompatible {
    fn complete(&self, prompt: &str, cfg: &ModelConfig) -> Result<String, AttemptError> {
        self.count.fetch_add(1, Ordering::SeqCst);
        let body = json!({
            "model": cfg.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_output_tokens,
        });
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let resp = post_json(&self.client, &url, &[("Authorization", format!("Bearer {}", self.key))], &body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| AttemptError::Fatal(LlmError::BadResponse("missing choices[0].message.content".into())))
    }

    fn requests(&self) -> usize {
        self.count.load(Ordering::SeqCst)
    }
}

pub struct GeminiCompatible {
    client: reqwest::blocking::Client,
    base_url: String,
    key: String,
    count: AtomicUsize,
}

impl GeminiCompatible {
    pub fn new(cfg: &ModelConfig) -> Result<Self, LlmError> {
        Self::with_key(cfg, &api_key(GEMINI_KEY_VAR)?)
    }

    pub fn with_key(cfg: &ModelConfig, key: &str) -> Result<Self, LlmError> {
        Ok(Self {
            client: http_client(Duration::from_secs(cfg.timeout_secs))?,
            base_url: cfg.base_url.clone().unwrap_or_else(|| GEMINI_DEFAULT_BASE.to_string()),
            key: key.to_string(),
            count: AtomicUsize::new(0),
        })
    }
}

impl Provider for GeminiCompatible {
    fn complete(&self, prompt: &str, cfg: &ModelConfig) -> Result<String, AttemptError> {
        self.count.fetch_add(1, Ordering::SeqCst);
        let body = json!({
            "contents": [{"role": "user", "parts": [{"text": prompt}]}],
            "generationConfig": {
                "temperature": cfg.temperature,
                "maxOutputTokens": cfg.max_output_tokens,
            },
        });
        let url = format!("{}/models/{}:generateContent", self.base_url.trim_end_matches('/'), cfg.model_id);
        let resp = post_json(&self.client, &url, &[("x-goog-api-key", self.key.clone())], &body)?;
        let parts = resp
            .pointer("/candidates/0/content/parts")
            .and_then(Value::as_array)
            .ok_or_else(|| AttemptError::Fatal(LlmError::BadResponse("missing candidates[0].content.parts".into())))?;
        Ok(parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect::<Vec<_>>().join(""))
    }

    fn requests(&self) -> usize {
        self.count.load(Ordering::SeqCst)
    }
}

pub fn build_provider(cfg: &ModelConfig) -> Result<Box<dyn Provider>, LlmError> {
    Ok(match cfg.provider {
        ProviderKind::Mock => {
            let path = cfg
                .responder
                .as_ref()
                .ok_or_else(|| LlmError::Config("mock provider requires a responder file".into()))?;
            Box::new(MockProvider::from_jsonl(path)?)
        }
        ProviderKind::OpenaiCompatible => Box::new(OpenAiCompatible::new(cfg)?),
        ProviderKind::GeminiCompatible => Box::new(GeminiCompatible::new(cfg)?),
    })
}
