use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embed::EmbedError;
use super::tokenize::tokenize;
use super::{CorpusError, CorpusIndex, DocumentStore, EmbeddingClient};
use crate::util::{sha256_hex, stable_sum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalMode {
    Tfidf,
    Dense,
    Random,
}

impl RetrievalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RetrievalMode::Tfidf => "tfidf",
            RetrievalMode::Dense => "dense",
            RetrievalMode::Random => "random",
        }
    }
}

impl fmt::Display for RetrievalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RetrievalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tfidf" => Ok(Self::Tfidf),
            "dense" => Ok(Self::Dense),
            "random" => Ok(Self::Random),
            other => Err(format!("unknown retriever {other:?} (expected tfidf, dense or random)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub top_k: usize,
    pub mode: RetrievalMode,
    pub seed: Option<u64>,
    pub embedding_model: Option<String>,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { top_k: 4, mode: RetrievalMode::Tfidf, seed: None, embedding_model: None }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.top_k == 0 {
            return Err(CorpusError::InvalidConfig("top_k must be at least 1".into()));
        }
        match self.mode {
            RetrievalMode::Random if self.seed.is_none() => Err(CorpusError::MissingSeed),
            RetrievalMode::Dense if self.embedding_model.is_none() => Err(CorpusError::MissingEmbedder),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub pmid: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRetrieval {
    pub query_fingerprint: String,
    pub hits: Vec<Hit>,
}

impl ScoredRetrieval {
    pub fn pmids(&self) -> Vec<&str> {
        self.hits.iter().map(|h| h.pmid.as_str()).collect()
    }
}

fn query_fingerprint(query: &str) -> String {
    sha256_hex(query)[..16].to_string()
}

/// Score descending, pmid ascending.
fn rank(mut hits: Vec<Hit>, k: usize) -> Vec<Hit> {
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.pmid.cmp(&b.pmid)));
    hits.truncate(k);
    hits
}

/// Lexical retrieval by TF-IDF cosine. A query whose tokens are all out of
/// vocabulary yields no hits; otherwise `min(top_k, N)` documents come back,
/// zero-scored documents included.
pub fn top_k(
    query: &str,
    cfg: &RetrievalConfig,
    index: Option<&CorpusIndex>,
    store: &DocumentStore,
) -> Result<ScoredRetrieval, CorpusError> {
    cfg.validate()?;
    let index = index.ok_or(CorpusError::IndexMissing("tfidf"))?;
    if tokenize(query).is_empty() {
        return Err(CorpusError::EmptyQuery);
    }
    if index.doc_count() != store.len() {
        index.check_covers(store)?;
    }
    let q = index.query_vector(query);
    let hits = if q.is_empty() {
        Vec::new()
    } else {
        let scored = index
            .doc_ids()
            .iter()
            .map(|pmid| Hit { pmid: pmid.clone(), score: index.cosine_with_doc(&q, pmid) })
            .collect();
        rank(scored, cfg.top_k)
    };
    Ok(ScoredRetrieval { query_fingerprint: query_fingerprint(query), hits })
}

fn unit(v: &[f32]) -> Vec<f64> {
    let norm = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| *x as f64 / norm).collect()
}

/// Dense retrieval: cosine between unit-normalized embeddings of the query
/// and each document's title and abstract.
pub fn dense_top_k(
    query: &str,
    cfg: &RetrievalConfig,
    store: &DocumentStore,
    embeddings: &EmbeddingClient,
) -> Result<ScoredRetrieval, CorpusError> {
    cfg.validate()?;
    if let Some(model) = &cfg.embedding_model {
        if model != embeddings.model_id() {
            return Err(CorpusError::InvalidConfig(format!(
                "configured embedding model {model:?} but client serves {:?}",
                embeddings.model_id()
            )));
        }
    }
    if query.trim().is_empty() {
        return Err(CorpusError::EmptyQuery);
    }
    let qv = embeddings.embed(query)?;
    let dim = qv.len();
    let q = unit(&qv);
    let mut scored = Vec::with_capacity(store.len());
    for doc in store.iter() {
        let dv = embeddings.embed(&doc.text())?;
        if dv.len() != dim {
            return Err(EmbedError::DimensionMismatch { expected: dim, found: dv.len() }.into());
        }
        let d = unit(&dv);
        let score = stable_sum(q.iter().zip(&d).map(|(a, b)| a * b).collect());
        scored.push(Hit { pmid: doc.pmid.clone(), score });
    }
    Ok(ScoredRetrieval { query_fingerprint: query_fingerprint(query), hits: rank(scored, cfg.top_k) })
}

/// Uniform sample without replacement of `min(top_k, N)` documents, in
/// sampled order, all scored 0.
pub fn random_top_k(cfg: &RetrievalConfig, store: &DocumentStore) -> Result<ScoredRetrieval, CorpusError> {
    cfg.validate()?;
    let seed = cfg.seed.ok_or(CorpusError::MissingSeed)?;
    if store.is_empty() {
        return Err(CorpusError::EmptyStore);
    }
    let pmids: Vec<&str> = store.pmids().collect();
    let k = cfg.top_k.min(pmids.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hits = rand::seq::index::sample(&mut rng, pmids.len(), k)
        .into_iter()
        .map(|i| Hit { pmid: pmids[i].to_string(), score: 0.0 })
        .collect();
    Ok(ScoredRetrieval { query_fingerprint: query_fingerprint(&format!("random:{seed}")), hits })
}

/// Retrieval bound to a store and its supporting structures.
pub struct Retriever<'a> {
    pub store: &'a DocumentStore,
    pub index: Option<&'a CorpusIndex>,
    pub embeddings: Option<&'a EmbeddingClient>,
    pub cfg: RetrievalConfig,
}

impl<'a> Retriever<'a> {
    pub fn new(store: &'a DocumentStore, cfg: RetrievalConfig) -> Self {
        Self { store, index: None, embeddings: None, cfg }
    }

    pub fn with_index(mut self, index: &'a CorpusIndex) -> Self {
        self.index = Some(index);
        self
    }

    pub fn with_embeddings(mut self, embeddings: &'a EmbeddingClient) -> Self {
        self.embeddings = Some(embeddings);
        self
    }

    /// Random mode mixes the query digest into the configured seed so that
    /// distinct queries draw distinct, reproducible samples.
    pub fn retrieve(&self, query: &str) -> Result<ScoredRetrieval, CorpusError> {
        match self.cfg.mode {
            RetrievalMode::Tfidf => top_k(query, &self.cfg, self.index, self.store),
            RetrievalMode::Dense => {
                let client = self.embeddings.ok_or(CorpusError::MissingEmbedder)?;
                dense_top_k(query, &self.cfg, self.store, client)
            }
            RetrievalMode::Random => {
                let base = self.cfg.seed.ok_or(CorpusError::MissingSeed)?;
                let digest = sha256_hex(query);
                let mix = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
                let cfg = RetrievalConfig { seed: Some(base ^ mix), ..self.cfg.clone() };
                let mut out = random_top_k(&cfg, self.store)?;
                out.query_fingerprint = query_fingerprint(query);
                Ok(out)
            }
        }
    }
}
