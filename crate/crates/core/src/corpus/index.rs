//! Inverted TF-IDF index.
//!
//! `tf` is the raw token count, `idf(t) = ln((N + 1) / (df(t) + 1)) + 1`,
//! and a document's weight vector is `tf · idf`. All weights are positive.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::tokenize::{self, tokenize};
use super::{CorpusError, DocumentStore};
use crate::util::stable_sum;

/// Term → weight.
pub type SparseVector = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TermEntry {
    df: usize,
    postings: Vec<(String, u32)>,
}

#[derive(Debug, Clone)]
pub struct CorpusIndex {
    doc_ids: Vec<String>,
    vocabulary: BTreeMap<String, TermEntry>,
    norms: BTreeMap<String, f64>,
    fingerprint: String,
    doc_terms: HashMap<String, Vec<(String, u32)>>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    tokenizer: String,
    doc_count: usize,
    doc_ids: Vec<String>,
    terms: usize,
}

#[derive(Serialize, Deserialize)]
struct TermLine {
    term: String,
    df: usize,
    postings: Vec<(String, u32)>,
}

#[derive(Serialize, Deserialize)]
struct NormsLine {
    norms: BTreeMap<String, f64>,
}

const FORMAT: &str = "tfidf-index";

impl CorpusIndex {
    pub fn build(store: &DocumentStore) -> Result<Self, CorpusError> {
        if store.is_empty() {
            return Err(CorpusError::EmptyStore);
        }
        let mut vocabulary: BTreeMap<String, TermEntry> = BTreeMap::new();
        for doc in store.iter() {
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for tok in tokenize(&doc.text()) {
                *tf.entry(tok).or_default() += 1;
            }
            for (term, count) in tf {
                let entry = vocabulary.entry(term).or_insert_with(|| TermEntry { df: 0, postings: Vec::new() });
                entry.df += 1;
                entry.postings.push((doc.pmid.clone(), count));
            }
        }
        let doc_ids = store.pmids().map(str::to_string).collect();
        Ok(Self::assemble(doc_ids, vocabulary, None, tokenize::fingerprint()))
    }

    fn assemble(
        doc_ids: Vec<String>,
        vocabulary: BTreeMap<String, TermEntry>,
        norms: Option<BTreeMap<String, f64>>,
        fingerprint: String,
    ) -> Self {
        let mut doc_terms: HashMap<String, Vec<(String, u32)>> = HashMap::new();
        for (term, entry) in &vocabulary {
            for (pmid, tf) in &entry.postings {
                doc_terms.entry(pmid.clone()).or_default().push((term.clone(), *tf));
            }
        }
        let mut index = Self { doc_ids, vocabulary, norms: BTreeMap::new(), fingerprint, doc_terms };
        index.norms = match norms {
            Some(n) => n,
            None => index
                .doc_ids
                .iter()
                .filter_map(|pmid| {
                    let v = index.doc_vector(pmid).ok()?;
                    (!v.is_empty()).then(|| (pmid.clone(), l2_norm(&v)))
                })
                .collect(),
        };
        index
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    /// Indexed pmids in ascending order, including documents without terms.
    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn vocabulary_len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn df(&self, term: &str) -> Option<usize> {
        self.vocabulary.get(term).map(|e| e.df)
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        let n = self.doc_count() as f64;
        self.df(term).map(|df| ((n + 1.0) / (df as f64 + 1.0)).ln() + 1.0)
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// L2 norm of a document vector; absent for documents with no terms.
    pub fn norm(&self, pmid: &str) -> Option<f64> {
        self.norms.get(pmid).copied()
    }

    pub fn contains(&self, pmid: &str) -> bool {
        self.doc_ids.binary_search_by(|p| p.as_str().cmp(pmid)).is_ok()
    }

    pub fn doc_vector(&self, pmid: &str) -> Result<SparseVector, CorpusError> {
        if !self.contains(pmid) {
            return Err(CorpusError::DocumentNotIndexed(pmid.to_string()));
        }
        Ok(self
            .doc_terms
            .get(pmid)
            .map(|terms| {
                terms
                    .iter()
                    .map(|(t, tf)| (t.clone(), *tf as f64 * self.idf(t).expect("posting term is indexed")))
                    .collect()
            })
            .unwrap_or_default())
    }

    /// Query tf times corpus idf; out-of-vocabulary tokens are dropped.
    pub fn query_vector(&self, text: &str) -> SparseVector {
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for tok in tokenize(text) {
            if self.vocabulary.contains_key(&tok) {
                *tf.entry(tok).or_default() += 1;
            }
        }
        tf.into_iter()
            .map(|(t, n)| {
                let w = n as f64 * self.idf(&t).expect("filtered to vocabulary");
                (t, w)
            })
            .collect()
    }

    /// Cosine between a query vector and an indexed document.
    pub fn cosine_with_doc(&self, query: &SparseVector, pmid: &str) -> f64 {
        let (Some(terms), Some(dnorm)) = (self.doc_terms.get(pmid), self.norm(pmid)) else {
            return 0.0;
        };
        let qnorm = l2_norm(query);
        if qnorm == 0.0 {
            return 0.0;
        }
        let products =
            terms.iter().filter_map(|(t, tf)| query.get(t).map(|q| q * (*tf as f64) * self.idf(t).unwrap())).collect();
        stable_sum(products) / (qnorm * dnorm)
    }

    /// Checks that the index was built over exactly this store.
    pub fn check_covers(&self, store: &DocumentStore) -> Result<(), CorpusError> {
        if self.doc_ids.len() != store.len() || !self.doc_ids.iter().map(String::as_str).eq(store.pmids()) {
            return Err(CorpusError::IndexStoreMismatch(format!(
                "index holds {} documents, store holds {}",
                self.doc_ids.len(),
                store.len()
            )));
        }
        Ok(())
    }

    /// Line-delimited serialization: a header, one line per term in
    /// lexicographic order, then the norms. Deterministic for a given store.
    pub fn write<W: Write>(&self, mut w: W) -> Result<(), CorpusError> {
        let header = Header {
            format: FORMAT.into(),
            version: 1,
            tokenizer: self.fingerprint.clone(),
            doc_count: self.doc_count(),
            doc_ids: self.doc_ids.clone(),
            terms: self.vocabulary.len(),
        };
        let json = |e: serde_json::Error| CorpusError::Io(e.into());
        serde_json::to_writer(&mut w, &header).map_err(json)?;
        w.write_all(b"\n")?;
        for (term, entry) in &self.vocabulary {
            let line = TermLine { term: term.clone(), df: entry.df, postings: entry.postings.clone() };
            serde_json::to_writer(&mut w, &line).map_err(json)?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut w, &NormsLine { norms: self.norms.clone() }).map_err(json)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    /// Loads an index, refusing one written by a different tokenizer.
    pub fn read<R: BufRead>(reader: R, expected_fingerprint: &str) -> Result<Self, CorpusError> {
        let bad = |m: String| CorpusError::MalformedIndex(m);
        let mut lines = reader.lines();
        let header: Header = match lines.next() {
            Some(l) => serde_json::from_str(&l?).map_err(|e| bad(format!("header: {e}")))?,
            None => return Err(bad("empty file".into())),
        };
        if header.format != FORMAT || header.version != 1 {
            return Err(bad(format!("unsupported format {} v{}", header.format, header.version)));
        }
        if header.tokenizer != expected_fingerprint {
            return Err(CorpusError::FingerprintMismatch {
                expected: expected_fingerprint.to_string(),
                found: header.tokenizer,
            });
        }
        let mut vocabulary = BTreeMap::new();
        for _ in 0..header.terms {
            let line = lines.next().ok_or_else(|| bad("truncated term list".into()))??;
            let t: TermLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            if t.df == 0 || t.df > header.doc_count || t.df != t.postings.len() {
                return Err(bad(format!("term {:?} has inconsistent df {}", t.term, t.df)));
            }
            if let Some((p, _)) = t.postings.iter().find(|(p, _)| header.doc_ids.binary_search(p).is_err()) {
                return Err(bad(format!("term {:?} posts unknown pmid {p}", t.term)));
            }
            vocabulary.insert(t.term, TermEntry { df: t.df, postings: t.postings });
        }
        let norms_line = lines.next().ok_or_else(|| bad("missing norms".into()))??;
        let norms: NormsLine = serde_json::from_str(&norms_line).map_err(|e| bad(e.to_string()))?;
        if header.doc_ids.len() != header.doc_count {
            return Err(bad("doc_count disagrees with doc_ids".into()));
        }
        Ok(Self::assemble(header.doc_ids, vocabulary, Some(norms.norms), header.tokenizer))
    }
}

pub(crate) fn l2_norm(v: &SparseVector) -> f64 {
    stable_sum(v.values().map(|w| w * w).collect()).sqrt()
}
