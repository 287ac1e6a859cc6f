//! Append-only response cache, one JSONL file per provider.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::LlmError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub model_id: String,
    pub prompt_sha256: String,
    pub raw: String,
    pub timestamp: i64,
}

/// Concurrent readers, serialized writers.
#[derive(Default)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    entries: RwLock<HashMap<String, CacheEntry>>,
    files: Mutex<HashMap<String, File>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Load every `*.jsonl` file in `dir` (created when missing).
    pub fn open(dir: &Path) -> Result<Self, LlmError> {
        fs::create_dir_all(dir)?;
        let mut entries = HashMap::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            for line in BufReader::new(File::open(&path)?).lines() {
                let line = line?;
                match serde_json::from_str::<CacheEntry>(&line) {
                    Ok(entry) => {
                        entries.entry(entry.key.clone()).or_insert(entry);
                    }
                    Err(e) if !line.trim().is_empty() => {
                        tracing::warn!(path = %path.display(), error = %e, "skipping bad cache line");
                    }
                    Err(_) => {}
                }
            }
        }
        Ok(Self { dir: Some(dir.to_path_buf()), entries: RwLock::new(entries), files: Mutex::new(HashMap::new()) })
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        self.entries.read().expect("cache lock poisoned").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Store a response. The first stored raw text for a key wins.
    pub fn put(
        &self,
        provider: &str,
        key: &str,
        model_id: &str,
        prompt_sha256: &str,
        raw: &str,
    ) -> Result<(), LlmError> {
        let entry = CacheEntry {
            key: key.to_string(),
            model_id: model_id.to_string(),
            prompt_sha256: prompt_sha256.to_string(),
            raw: raw.to_string(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs() as i64),
        };
        let mut files = self.files.lock().expect("cache file lock poisoned");
        if self.get(key).is_some() {
            return Ok(());
        }
        if let Some(dir) = &self.dir {
            let file = match files.entry(provider.to_string()) {
                std::collections::hash_map::Entry::Occupied(o) => o.into_mut(),
                std::collections::hash_map::Entry::Vacant(v) => {
                    v.insert(OpenOptions::new().create(true).append(true).open(dir.join(format!("{provider}.jsonl")))?)
                }
            };
            let mut line = serde_json::to_vec(&entry).map_err(std::io::Error::other)?;
            line.push(b'\n');
            file.write_all(&line)?;
            file.flush()?;
        }
        self.entries.write().expect("cache lock poisoned").insert(key.to_string(), entry);
        Ok(())
    }
}
