//! Document corpus: ingestion, the TF-IDF index and top-k retrieval.

mod document;
pub mod embed;
mod index;
mod retrieve;
pub mod tokenize;

pub use document::{ingest, Document, DocumentStore};
pub use embed::{EmbedError, Embedder, EmbeddingClient, HttpEmbedder, MockEmbedder, MockKind};
pub use index::{CorpusIndex, SparseVector};
pub use retrieve::{dense_top_k, random_top_k, top_k, Hit, RetrievalConfig, RetrievalMode, Retriever, ScoredRetrieval};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("duplicate pmid {0:?}")]
    DuplicatePmid(String),
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("document store is empty")]
    EmptyStore,
    #[error("query has no indexable tokens")]
    EmptyQuery,
    #[error("retrieval mode {0} needs an index that was not provided")]
    IndexMissing(&'static str),
    #[error("document {0} is not in the index")]
    DocumentNotIndexed(String),
    #[error("index tokenizer fingerprint {found} does not match configured {expected}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("index does not cover the document store: {0}")]
    IndexStoreMismatch(String),
    #[error("malformed index file: {0}")]
    MalformedIndex(String),
    #[error("invalid retrieval configuration: {0}")]
    InvalidConfig(String),
    #[error("random retrieval requires a seed")]
    MissingSeed,
    #[error("dense retrieval requires an embedding model and client")]
    MissingEmbedder,
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
