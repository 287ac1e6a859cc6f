//! Fixed-length vectors for (diff, message) pairs.
//!
//! Inputs longer than the encoder's token limit are split into consecutive
//! non-overlapping windows; the window vectors are averaged component-wise
//! with equal weight.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::digest::sha256_hex;
use crate::exec::Exec;
use crate::label::Label;
use crate::llm::{
    self, AttemptError, LlmError, GEMINI_DEFAULT_BASE, GEMINI_KEY_VAR, OPENAI_DEFAULT_BASE, OPENAI_KEY_VAR,
};

pub const EMBEDDING_DIM: usize = 768;
/// Characters per token assumed when the real tokenizer is remote.
pub const CHARS_PER_TOKEN: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("diff text is empty")]
    EmptyDiff,
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("encoder returned {got} values, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("encoder returned a non-finite value")]
    NonFinite,
    #[error("invalid embedding config: {0}")]
    Config(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed embedding record at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedProvider {
    Remote,
    LocalMock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemoteApi {
    OpenaiCompatible,
    #[default]
    GeminiCompatible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    pub provider: EmbedProvider,
    pub model_id: String,
    pub token_limit: usize,
    pub pooling: Pooling,
    pub remote_api: RemoteApi,
    pub base_url: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub max_in_flight: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            provider: EmbedProvider::LocalMock,
            model_id: "local-hash-768".to_string(),
            token_limit: 512,
            pooling: Pooling::Mean,
            remote_api: RemoteApi::default(),
            base_url: None,
            timeout_secs: 60,
            max_retries: 3,
            max_in_flight: 4,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.token_limit < 16 {
            return Err(EmbedError::Config(format!("token_limit must be >= 16, got {}", self.token_limit)));
        }
        if self.model_id.trim().is_empty() {
            return Err(EmbedError::Config("model_id is empty".into()));
        }
        Ok(())
    }

    /// Tokens per window; remote encoders get a 10% safety margin because
    /// their token counts are only estimated.
    pub fn window(&self) -> usize {
        match self.provider {
            EmbedProvider::LocalMock => self.token_limit,
            EmbedProvider::Remote => (self.token_limit * 9 / 10).max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub source_model: String,
    pub input_sha256: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, source_model: &str, input_sha256: &str) -> Result<Self, EmbedError> {
        check_vector(&values)?;
        Ok(Self { values, source_model: source_model.to_string(), input_sha256: input_sha256.to_string() })
    }
}

fn check_vector(values: &[f64]) -> Result<(), EmbedError> {
    if values.len() != EMBEDDING_DIM {
        return Err(EmbedError::DimensionMismatch { expected: EMBEDDING_DIM, got: values.len() });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EmbedError::NonFinite);
    }
    Ok(())
}

/// Encoder input: diff, newline, message.
pub fn embedding_input(message: &str, diff: &str) -> String {
    format!("{diff}\n{message}")
}

/// Word runs (alphanumerics and `_`) and single punctuation characters;
/// whitespace separates tokens and is dropped.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        let word = c.is_alphanumeric() || c == '_';
        if word {
            start.get_or_insert(i);
            continue;
        }
        if let Some(s) = start.take() {
            out.push(&text[s..i]);
        }
        if !c.is_whitespace() {
            out.push(&text[i..i + c.len_utf8()]);
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}

/// Fixed-size character chunks standing in for provider tokens.
pub fn char_chunks(text: &str, chars_per_chunk: usize) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for (count, (i, _)) in text.char_indices().enumerate() {
        if count > 0 && count % chars_per_chunk == 0 {
            out.push(&text[start..i]);
            start = i;
        }
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

/// Mean of `encode` over consecutive non-overlapping windows of at most
/// `window` tokens. Every window counts equally, including a short tail.
pub fn window_mean_pool<T, E, F>(tokens: &[T], window: usize, encode: F) -> Result<Vec<f64>, E>
where
    F: FnMut(&[T]) -> Result<Vec<f64>, E>,
{
    assert!(!tokens.is_empty(), "window_mean_pool needs at least one token");
    assert!(window >= 1, "window must be positive");
    let vectors = tokens.chunks(window).map(encode).collect::<Result<Vec<_>, E>>()?;
    Ok(mean_vectors(&vectors))
}

pub fn mean_vectors(vectors: &[Vec<f64>]) -> Vec<f64> {
    let dim = vectors.first().map_or(0, Vec::len);
    let n = vectors.len() as f64;
    let mut acc = vec![0.0; dim];
    for v in vectors {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Turns one window of text into a vector.
pub trait Encoder: Send + Sync {
    fn encode(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
}

/// Deterministic offline encoder: signed feature hashing of tokens and
/// token bigrams, L2-normalized.
#[derive(Debug, Default, Clone, Copy)]
pub struct HashingEncoder;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3))
}

impl Encoder for HashingEncoder {
    fn encode(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let mut v = vec![0.0; EMBEDDING_DIM];
        let tokens = tokenize(text);
        let mut bump = |key: &[u8], weight: f64| {
            let h = fnv1a(key);
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % EMBEDDING_DIM as u64) as usize] += sign * weight;
        };
        for tok in &tokens {
            bump(tok.to_lowercase().as_bytes(), 1.0);
        }
        for pair in tokens.windows(2) {
            bump(format!("{}\u{1}{}", pair[0], pair[1]).as_bytes(), 0.5);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

/// HTTP embedding endpoint (OpenAI- or Gemini-style).
pub struct RemoteEncoder {
    client: reqwest::blocking::Client,
    api: RemoteApi,
    base_url: String,
    model_id: String,
    key: String,
    max_retries: u32,
}

impl RemoteEncoder {
    pub fn new(cfg: &EmbedConfig) -> Result<Self, EmbedError> {
        let var = match cfg.remote_api {
            RemoteApi::OpenaiCompatible => OPENAI_KEY_VAR,
            RemoteApi::GeminiCompatible => GEMINI_KEY_VAR,
        };
        Self::with_key(cfg, &llm::api_key(var)?)
    }

    pub fn with_key(cfg: &EmbedConfig, key: &str) -> Result<Self, EmbedError> {
        let default_base = match cfg.remote_api {
            RemoteApi::OpenaiCompatible => OPENAI_DEFAULT_BASE,
            RemoteApi::GeminiCompatible => GEMINI_DEFAULT_BASE,
        };
        Ok(Self {
            client: llm::http_client(Duration::from_secs(cfg.timeout_secs))?,
            api: cfg.remote_api,
            base_url: cfg.base_url.clone().unwrap_or_else(|| default_base.to_string()),
            model_id: cfg.model_id.clone(),
            key: key.to_string(),
            max_retries: cfg.max_retries,
        })
    }

    fn attempt(&self, text: &str) -> Result<Vec<f64>, AttemptError> {
        let base = self.base_url.trim_end_matches('/');
        let (url, headers, body, pointer) = match self.api {
            RemoteApi::OpenaiCompatible => (
                format!("{base}/embeddings"),
                vec![("Authorization", format!("Bearer {}", self.key))],
                json!({"model": self.model_id, "input": text, "dimensions": EMBEDDING_DIM}),
                "/data/0/embedding",
            ),
            RemoteApi::GeminiCompatible => (
                format!("{base}/models/{}:embedContent", self.model_id),
                vec![("x-goog-api-key", self.key.clone())],
                json!({
                    "content": {"parts": [{"text": text}]},
                    "taskType": "CLASSIFICATION",
                    "outputDimensionality": EMBEDDING_DIM,
                }),
                "/embedding/values",
            ),
        };
        let resp = llm::post_json(&self.client, &url, &headers, &body)?;
        resp.pointer(pointer)
            .and_then(Value::as_array)
            .and_then(|xs| xs.iter().map(Value::as_f64).collect::<Option<Vec<_>>>())
            .ok_or_else(|| AttemptError::Fatal(LlmError::BadResponse(format!("missing numeric array at {pointer}"))))
    }
}

impl Encoder for RemoteEncoder {
    fn encode(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(500 << (attempt - 1).min(6)));
            }
            match self.attempt(text) {
                Ok(v) => return Ok(v),
                Err(AttemptError::Fatal(e)) => return Err(e.into()),
                Err(AttemptError::Transient(msg)) => {
                    tracing::warn!(attempt, error = %msg, "embedding request failed");
                    last = msg;
                }
            }
        }
        Err(EmbedError::ProviderUnavailable(last))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheLine {
    input_sha256: String,
    model_id: String,
    values: Vec<f64>,
}

/// JSONL cache keyed by (model, input hash).
#[derive(Default)]
pub struct EmbeddingCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<(String, String), Vec<f64>>>,
    file: Mutex<Option<File>>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> Result<Self, EmbedError> {
        let mut entries = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                if let Ok(e) = serde_json::from_str::<CacheLine>(&line) {
                    entries.entry((e.model_id, e.input_sha256)).or_insert(e.values);
                }
            }
        } else if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Ok(Self { path: Some(path.to_path_buf()), entries: RwLock::new(entries), file: Mutex::new(None) })
    }

    pub fn get(&self, model_id: &str, input_sha256: &str) -> Option<Vec<f64>> {
        self.entries
            .read()
            .expect("embedding cache poisoned")
            .get(&(model_id.to_string(), input_sha256.to_string()))
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("embedding cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn put(&self, model_id: &str, input_sha256: &str, values: &[f64]) -> Result<(), EmbedError> {
        let mut file = self.file.lock().expect("embedding cache poisoned");
        if self.get(model_id, input_sha256).is_some() {
            return Ok(());
        }
        if let Some(path) = &self.path {
            if file.is_none() {
                *file = Some(OpenOptions::new().create(true).append(true).open(path)?);
            }
            let line = CacheLine {
                input_sha256: input_sha256.to_string(),
                model_id: model_id.to_string(),
                values: values.to_vec(),
            };
            let mut bytes = serde_json::to_vec(&line).map_err(std::io::Error::other)?;
            bytes.push(b'\n');
            file.as_mut().expect("opened above").write_all(&bytes)?;
        }
        self.entries
            .write()
            .expect("embedding cache poisoned")
            .insert((model_id.to_string(), input_sha256.to_string()), values.to_vec());
        Ok(())
    }
}

pub struct Embedder {
    cfg: EmbedConfig,
    encoder: Box<dyn Encoder>,
    cache: EmbeddingCache,
}

impl Embedder {
    pub fn new(cfg: EmbedConfig, cache: EmbeddingCache) -> Result<Self, EmbedError> {
        cfg.validate()?;
        let encoder: Box<dyn Encoder> = match cfg.provider {
            EmbedProvider::LocalMock => Box::new(HashingEncoder),
            EmbedProvider::Remote => Box::new(RemoteEncoder::new(&cfg)?),
        };
        Ok(Self { cfg, encoder, cache })
    }

    pub fn with_encoder(
        cfg: EmbedConfig,
        encoder: Box<dyn Encoder>,
        cache: EmbeddingCache,
    ) -> Result<Self, EmbedError> {
        cfg.validate()?;
        Ok(Self { cfg, encoder, cache })
    }

    pub fn config(&self) -> &EmbedConfig {
        &self.cfg
    }

    fn encode_checked(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let v = self.encoder.encode(text)?;
        check_vector(&v)?;
        Ok(v)
    }

    pub fn embed_change(&self, message: &str, diff: &str) -> Result<EmbeddingVector, EmbedError> {
        if diff.trim().is_empty() {
            return Err(EmbedError::EmptyDiff);
        }
        let input = embedding_input(message, diff);
        let sha = sha256_hex(&input);
        if let Some(values) = self.cache.get(&self.cfg.model_id, &sha) {
            return EmbeddingVector::new(values, &self.cfg.model_id, &sha);
        }
        let window = self.cfg.window();
        let values = match self.cfg.provider {
            EmbedProvider::LocalMock => {
                let tokens = tokenize(&input);
                if tokens.len() <= window {
                    self.encode_checked(&input)?
                } else {
                    window_mean_pool(&tokens, window, |w| self.encode_checked(&w.join(" ")))?
                }
            }
            EmbedProvider::Remote => {
                let chunks = char_chunks(&input, CHARS_PER_TOKEN);
                if chunks.len() <= window {
                    self.encode_checked(&input)?
                } else {
                    window_mean_pool(&chunks, window, |w| self.encode_checked(&w.concat()))?
                }
            }
        };
        self.cache.put(&self.cfg.model_id, &sha, &values)?;
        EmbeddingVector::new(values, &self.cfg.model_id, &sha)
    }

    /// Embed `(message, diff)` pairs in input order.
    pub fn embed_batch(&self, items: &[(String, String)], exec: Exec) -> Vec<Result<EmbeddingVector, EmbedError>> {
        match self.cfg.provider {
            EmbedProvider::LocalMock => exec.map(items, |(m, d)| self.embed_change(m, d)),
            EmbedProvider::Remote => {
                exec.map_bounded(items, self.cfg.max_in_flight.max(1), |(m, d)| self.embed_change(m, d))
            }
        }
    }
}

/// One embedded change as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub change_id: String,
    pub label: Option<Label>,
    #[serde(flatten)]
    pub vector: EmbeddingVector,
}

pub fn write_embeddings_jsonl(records: &[EmbeddingRecord], path: &Path) -> Result<(), EmbedError> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_embeddings_jsonl(path: &Path) -> Result<Vec<EmbeddingRecord>, EmbedError> {
    let mut out = Vec::new();
    for (k, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| EmbedError::Malformed { line: k + 1, reason: e.to_string() })?;
        check_vector(&rec.vector.values).map_err(|e| EmbedError::Malformed { line: k + 1, reason: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}
