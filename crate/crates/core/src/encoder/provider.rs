//! Client for a remote embedding service.
//!
//! Protocol: `POST {"input": [text, ...]}` with an optional bearer token,
//! answered by `{"data": [{"embedding": [number, ...]}, ...]}` in input
//! order. Texts are sent in chunks of at most `batch_limit`.
//!
//! Every fetched vector is appended to an on-disk cache keyed by
//! `fnv1a64(endpoint ++ "\0" ++ text)`. The cache file is a 16-byte
//! magic/version header followed by records of `u64 key, u32 dim,
//! dim x f32`, all little-endian. A torn final record is dropped on open.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{EmbeddingVector, Encoder};
use crate::error::{Error, Result};
use crate::hash::Fnv64;

/// Environment variable holding the provider bearer token.
pub const TOKEN_ENV: &str = "ENTNORM_PROVIDER_TOKEN";

const CACHE_MAGIC: &[u8; 12] = b"ENTNORM:EMBC";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub token: Option<String>,
    pub batch_limit: usize,
    pub cache_path: PathBuf,
    /// Retries after the first attempt for transport failures and 5xx/429.
    pub max_retries: usize,
    pub backoff: Duration,
    pub timeout: Duration,
}

impl ProviderConfig {
    pub fn new(endpoint: impl Into<String>, cache_path: impl Into<PathBuf>) -> Self {
        ProviderConfig {
            endpoint: endpoint.into(),
            token: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            batch_limit: 64,
            cache_path: cache_path.into(),
            max_retries: 3,
            backoff: Duration::from_millis(200),
            timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Default)]
struct Cache {
    entries: HashMap<u64, Vec<f32>>,
}

impl Cache {
    fn open(path: &Path) -> Result<Self> {
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir)?;
                }
                let mut f = fs::File::create(path)?;
                f.write_all(CACHE_MAGIC)?;
                f.write_all(&CACHE_VERSION.to_le_bytes())?;
                return Ok(Cache::default());
            }
            Err(e) => return Err(e.into()),
        };
        if bytes.len() < 16 || &bytes[..12] != CACHE_MAGIC {
            return Err(Error::Corrupt(format!("{}: not an embedding cache", path.display())));
        }
        let version = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
        if version != CACHE_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CACHE_VERSION,
            });
        }
        let mut entries = HashMap::new();
        let mut pos = 16;
        while pos + 12 <= bytes.len() {
            let key = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap());
            let dim = u32::from_le_bytes(bytes[pos + 8..pos + 12].try_into().unwrap()) as usize;
            let end = pos + 12 + dim * 4;
            if end > bytes.len() {
                break;
            }
            let values = bytes[pos + 12..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            entries.insert(key, values);
            pos = end;
        }
        if pos != bytes.len() {
            let f = OpenOptions::new().write(true).open(path)?;
            f.set_len(pos as u64)?;
        }
        Ok(Cache { entries })
    }

    fn append(&mut self, path: &Path, items: &[(u64, Vec<f32>)]) -> Result<()> {
        let f = OpenOptions::new().append(true).open(path)?;
        let mut w = BufWriter::new(f);
        for (key, values) in items {
            w.write_all(&key.to_le_bytes())?;
            w.write_all(&(values.len() as u32).to_le_bytes())?;
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        for (key, values) in items {
            self.entries.insert(*key, values.clone());
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct ProviderResponse {
    data: Vec<ProviderItem>,
}

#[derive(Deserialize)]
struct ProviderItem {
    embedding: Vec<f64>,
}

pub struct ProviderClient {
    cfg: ProviderConfig,
    agent: ureq::Agent,
    cache: Mutex<Cache>,
}

impl std::fmt::Debug for ProviderClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProviderClient")
            .field("endpoint", &self.cfg.endpoint)
            .field("batch_limit", &self.cfg.batch_limit)
            .finish_non_exhaustive()
    }
}

impl ProviderClient {
    pub fn new(cfg: ProviderConfig) -> Result<Self> {
        if cfg.batch_limit == 0 {
            return Err(Error::InvalidConfig("provider batch limit must be >= 1".into()));
        }
        let cache = Cache::open(&cfg.cache_path)?;
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(cfg.timeout))
            .build()
            .into();
        Ok(ProviderClient {
            cfg,
            agent,
            cache: Mutex::new(cache),
        })
    }

    pub fn cache_key(&self, text: &str) -> u64 {
        let mut h = Fnv64::new();
        h.update(self.cfg.endpoint.as_bytes());
        h.update(&[0]);
        h.update(text.as_bytes());
        h.finish()
    }

    /// Embeddings for `texts` in input order, from cache where possible.
    pub fn fetch_embeddings(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let keys: Vec<u64> = texts.iter().map(|t| self.cache_key(t)).collect();
        let mut found: Vec<Option<Vec<f32>>> = {
            let cache = self.cache.lock().expect("cache lock poisoned");
            keys.iter().map(|k| cache.entries.get(k).cloned()).collect()
        };

        let mut missing: Vec<usize> = Vec::new();
        for (i, f) in found.iter().enumerate() {
            if f.is_none() && !missing.iter().any(|&j| keys[j] == keys[i]) {
                missing.push(i);
            }
        }
        for chunk in missing.chunks(self.cfg.batch_limit) {
            let inputs: Vec<&str> = chunk.iter().map(|&i| texts[i].as_str()).collect();
            let vectors = self.request(&inputs)?;
            let items: Vec<(u64, Vec<f32>)> = chunk
                .iter()
                .zip(vectors)
                .map(|(&i, v)| (keys[i], v))
                .collect();
            self.cache
                .lock()
                .expect("cache lock poisoned")
                .append(&self.cfg.cache_path, &items)?;
            for (key, v) in items {
                for (slot, k) in found.iter_mut().zip(&keys) {
                    if *k == key && slot.is_none() {
                        *slot = Some(v.clone());
                    }
                }
            }
        }

        let out: Vec<EmbeddingVector> = found
            .into_iter()
            .map(|v| EmbeddingVector::new(v.expect("every text fetched or cached")))
            .collect::<Result<_>>()?;
        if let Some(first) = out.first() {
            if let Some(bad) = out.iter().find(|v| v.dim() != first.dim()) {
                return Err(Error::DimensionMismatch {
                    expected: first.dim(),
                    found: bad.dim(),
                });
            }
        }
        Ok(out)
    }

    fn request(&self, inputs: &[&str]) -> Result<Vec<Vec<f32>>> {
        let body = json!({ "input": inputs });
        let mut last_err = String::new();
        let attempts = self.cfg.max_retries + 1;
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.cfg.backoff * (1u32 << (attempt - 1).min(16)));
            }
            let mut req = self.agent.post(&self.cfg.endpoint);
            if let Some(token) = &self.cfg.token {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
            let mut resp = match req.send_json(&body) {
                Ok(r) => r,
                Err(e) => {
                    last_err = e.to_string();
                    continue;
                }
            };
            let status = resp.status().as_u16();
            let text = resp
                .body_mut()
                .read_to_string()
                .map_err(|e| Error::Provider(e.to_string()));
            if status == 429 || status >= 500 {
                last_err = format!("HTTP {status}");
                continue;
            }
            let text = text?;
            if !(200..300).contains(&status) {
                return Err(Error::Provider(format!("HTTP {status}: {text}")));
            }
            return parse_response(&text, inputs.len());
        }
        Err(Error::Network {
            attempts,
            message: last_err,
        })
    }
}

fn parse_response(text: &str, expected: usize) -> Result<Vec<Vec<f32>>> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Provider(format!("bad JSON: {e}")))?;
    if let Some(err) = value.get("error") {
        return Err(Error::Provider(err.to_string()));
    }
    let resp: ProviderResponse =
        serde_json::from_value(value).map_err(|e| Error::Provider(format!("bad payload: {e}")))?;
    if resp.data.len() != expected {
        return Err(Error::Provider(format!(
            "expected {expected} embeddings, got {}",
            resp.data.len()
        )));
    }
    let dim = resp.data.first().map_or(0, |d| d.embedding.len());
    resp.data
        .into_iter()
        .map(|d| {
            if d.embedding.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: d.embedding.len(),
                });
            }
            Ok(d.embedding.into_iter().map(|v| v as f32).collect())
        })
        .collect()
}

impl Encoder for ProviderClient {
    fn encode_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(Error::EmptyText { index: i });
        }
        self.fetch_embeddings(texts)
    }
}
