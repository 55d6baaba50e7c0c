//! Dense embeddings behind a client interface, with a content-addressed
//! cache keyed by (model id, text digest).

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tokenize::tokenize;
use crate::util::sha256_hex;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding service error: {0}")]
    Service(String),
    #[error("embedding dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embedding cache: {0}")]
    Cache(#[from] std::io::Error),
}

pub trait Embedder: Send + Sync {
    fn model_id(&self) -> &str;
    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError>;
}

/// OpenAI-compatible `POST {base_url}/embeddings`.
pub struct HttpEmbedder {
    agent: ureq::Agent,
    base_url: String,
    model: String,
    api_key: Option<String>,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f32>,
}

impl HttpEmbedder {
    pub fn new(
        base_url: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Self {
        let agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        Self { agent, base_url: base_url.into(), model: model.into(), api_key }
    }
}

impl Embedder for HttpEmbedder {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let url = format!("{}/embeddings", self.base_url.trim_end_matches('/'));
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(EmbeddingRequest { model: &self.model, input: text })
            .map_err(|e| EmbedError::Service(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(EmbedError::Service(format!("HTTP {status}")));
        }
        let body: EmbeddingResponse =
            resp.body_mut().read_json().map_err(|e| EmbedError::Service(format!("bad response body: {e}")))?;
        body.data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| EmbedError::Service("response holds no embedding".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockKind {
    /// Whole-text digest seeds a generator; unrelated texts are near-orthogonal.
    Digest,
    /// Signed feature hashing of tokens; overlapping vocabulary scores higher.
    HashedTerms,
}

/// Offline deterministic embedder with call instrumentation.
pub struct MockEmbedder {
    model: String,
    kind: MockKind,
    dim: usize,
    calls: AtomicUsize,
}

impl MockEmbedder {
    pub fn new(model: impl Into<String>, kind: MockKind, dim: usize) -> Self {
        Self { model: model.into(), kind, dim: dim.max(1), calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Embedder for MockEmbedder {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut v = vec![0f64; self.dim];
        match self.kind {
            MockKind::Digest => {
                let digest = sha256_hex(text);
                let seed = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for x in v.iter_mut() {
                    *x = rng.random_range(-1.0..1.0);
                }
            }
            MockKind::HashedTerms => {
                for tok in tokenize(text) {
                    let h = u64::from_str_radix(&sha256_hex(tok.as_bytes())[..16], 16).expect("hex digest");
                    let bucket = (h % self.dim as u64) as usize;
                    v[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v.into_iter().map(|x| x as f32).collect())
    }
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    model: String,
    vector: Vec<f32>,
}

/// Embedder plus cache. Reads run concurrently; writes are serialized.
pub struct EmbeddingClient {
    embedder: Arc<dyn Embedder>,
    cache_dir: Option<PathBuf>,
    memory: RwLock<HashMap<String, Arc<Vec<f32>>>>,
    write_lock: Mutex<()>,
}

impl EmbeddingClient {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        Self { embedder, cache_dir: None, memory: RwLock::new(HashMap::new()), write_lock: Mutex::new(()) }
    }

    /// Persists vectors as `<dir>/<key[..2]>/<key>.json`.
    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    pub fn model_id(&self) -> &str {
        self.embedder.model_id()
    }

    pub fn cache_key(&self, text: &str) -> String {
        sha256_hex(format!("{}\n{}", self.embedder.model_id(), sha256_hex(text)))
    }

    fn disk_path(&self, key: &str) -> Option<PathBuf> {
        self.cache_dir.as_ref().map(|d| d.join(&key[..2]).join(format!("{key}.json")))
    }

    pub fn embed(&self, text: &str) -> Result<Arc<Vec<f32>>, EmbedError> {
        let key = self.cache_key(text);
        if let Some(v) = self.memory.read().unwrap().get(&key) {
            return Ok(Arc::clone(v));
        }
        if let Some(path) = self.disk_path(&key) {
            if let Ok(raw) = fs::read(&path) {
                if let Ok(entry) = serde_json::from_slice::<CacheEntry>(&raw) {
                    if entry.model == self.embedder.model_id() {
                        let v = Arc::new(entry.vector);
                        self.memory.write().unwrap().insert(key, Arc::clone(&v));
                        return Ok(v);
                    }
                }
            }
        }
        let v = Arc::new(self.embedder.embed(text)?);
        let _guard = self.write_lock.lock().unwrap();
        if let Some(path) = self.disk_path(&key) {
            fs::create_dir_all(path.parent().expect("cache path has a parent"))?;
            let entry = CacheEntry { model: self.embedder.model_id().to_string(), vector: v.to_vec() };
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, serde_json::to_vec(&entry).map_err(std::io::Error::from)?)?;
            fs::rename(&tmp, &path)?;
        }
        self.memory.write().unwrap().insert(key, Arc::clone(&v));
        Ok(v)
    }
}
