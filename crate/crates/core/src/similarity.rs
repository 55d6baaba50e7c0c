//! Hierarchy similarity between MeSH terms, term sets and document
//! collections, plus the TF-IDF collection scorer used as the lexical
//! alternative.
//!
//! Term metrics work over tree-number pairs and take the best pair:
//!
//! * Wu–Palmer: `2·lcp(ta, tb) / (depth(ta) + depth(tb))`
//! * Lin: `2·IC(lca) / (IC(a) + IC(b))`
//! * Resnik, normalized: `IC(lca) / max IC`
//!
//! Term sets are compared by best-match average; a collection scores the
//! mean of its documents' set similarities to the source.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, CorpusIndex, Document, SparseVector};
use crate::mesh::{AnnotationCounts, InformationContent, MeshDescriptor, MeshError, MeshOntology, TreeNumber};
use crate::util::stable_sum;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("unknown descriptor UI {0}")]
    UnknownUi(String),
    #[error("retrieved collection is empty")]
    EmptyCollection,
    #[error("document {0} is not in the index")]
    DocumentNotIndexed(String),
    #[error("metric {0} needs corpus annotation counts")]
    MissingAnnotationCounts(TermMetric),
}

impl From<MeshError> for ScoringError {
    fn from(e: MeshError) -> Self {
        match e {
            MeshError::UnknownUi(ui) => ScoringError::UnknownUi(ui),
            other => ScoringError::UnknownUi(other.to_string()),
        }
    }
}

impl From<CorpusError> for ScoringError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::DocumentNotIndexed(p) => ScoringError::DocumentNotIndexed(p),
            other => ScoringError::DocumentNotIndexed(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TermMetric {
    #[default]
    WuPalmer,
    Lin,
    ResnikNormalized,
}

impl TermMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            TermMetric::WuPalmer => "wu-palmer",
            TermMetric::Lin => "lin",
            TermMetric::ResnikNormalized => "resnik-normalized",
        }
    }

    pub fn needs_ic(self) -> bool {
        !matches!(self, TermMetric::WuPalmer)
    }
}

impl fmt::Display for TermMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TermMetric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wu-palmer" => Ok(Self::WuPalmer),
            "lin" => Ok(Self::Lin),
            "resnik-normalized" => Ok(Self::ResnikNormalized),
            other => Err(format!("unknown term metric {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TermSimConfig {
    pub metric: TermMetric,
}

/// How a retrieved collection's annotations are compared with the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollectionAggregation {
    /// Mean over documents of the per-document set similarity.
    #[default]
    Mean,
    /// One set similarity against the union of all retrieved annotations.
    Union,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    #[default]
    Mesh,
    Tfidf,
    Null,
}

impl ScorerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScorerKind::Mesh => "mesh",
            ScorerKind::Tfidf => "tfidf",
            ScorerKind::Null => "null",
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScorerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mesh" => Ok(Self::Mesh),
            "tfidf" => Ok(Self::Tfidf),
            "null" => Ok(Self::Null),
            other => Err(format!("unknown scorer {other:?} (expected mesh, tfidf or null)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub kind: ScorerKind,
    pub tie_margin: f64,
    pub term: TermSimConfig,
    pub aggregation: CollectionAggregation,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            kind: ScorerKind::Mesh,
            tie_margin: 0.0,
            term: TermSimConfig::default(),
            aggregation: CollectionAggregation::Mean,
        }
    }
}

/// Term, set and collection similarity over one ontology.
pub struct HierarchyScorer<'a> {
    ontology: &'a MeshOntology,
    cfg: TermSimConfig,
    ic: Option<InformationContent>,
}

impl<'a> HierarchyScorer<'a> {
    /// Wu–Palmer needs no corpus statistics; the IC metrics need `counts`.
    pub fn new(
        ontology: &'a MeshOntology,
        cfg: TermSimConfig,
        counts: Option<&AnnotationCounts>,
    ) -> Result<Self, ScoringError> {
        let ic = match (cfg.metric.needs_ic(), counts) {
            (false, _) => None,
            (true, Some(c)) => Some(InformationContent::new(ontology, c)),
            (true, None) => return Err(ScoringError::MissingAnnotationCounts(cfg.metric)),
        };
        Ok(Self { ontology, cfg, ic })
    }

    pub fn ontology(&self) -> &MeshOntology {
        self.ontology
    }

    fn ic(&self, ui: &str) -> f64 {
        self.ic.as_ref().and_then(|t| t.get(ui).ok()).unwrap_or(0.0)
    }

    fn lca_ic(&self, ta: &TreeNumber, tb: &TreeNumber) -> f64 {
        let shared = ta.lcp_depth(tb);
        ta.prefix(shared).and_then(|lca| self.ontology.nearest_indexed(&lca)).map(|ui| self.ic(ui)).unwrap_or(0.0)
    }

    fn pair_similarity(&self, a: &MeshDescriptor, b: &MeshDescriptor, ta: &TreeNumber, tb: &TreeNumber) -> f64 {
        match self.cfg.metric {
            TermMetric::WuPalmer => 2.0 * ta.lcp_depth(tb) as f64 / (ta.depth() + tb.depth()) as f64,
            TermMetric::Lin => {
                let denom = self.ic(&a.ui) + self.ic(&b.ui);
                if denom == 0.0 {
                    0.0
                } else {
                    (2.0 * self.lca_ic(ta, tb) / denom).clamp(0.0, 1.0)
                }
            }
            TermMetric::ResnikNormalized => {
                let max = self.ic.as_ref().map(|t| t.max_ic()).unwrap_or(0.0);
                if max == 0.0 {
                    0.0
                } else {
                    (self.lca_ic(ta, tb) / max).clamp(0.0, 1.0)
                }
            }
        }
    }

    /// Similarity of two descriptors in `[0, 1]`; 0 when either has no
    /// tree numbers.
    pub fn term_similarity(&self, a: &str, b: &str) -> Result<f64, ScoringError> {
        let da = self.ontology.require(a)?;
        let db = self.ontology.require(b)?;
        Ok(self.descriptor_similarity(da, db))
    }

    fn descriptor_similarity(&self, a: &MeshDescriptor, b: &MeshDescriptor) -> f64 {
        if !a.has_position() || !b.has_position() {
            return 0.0;
        }
        if a.ui == b.ui && self.cfg.metric != TermMetric::ResnikNormalized {
            return 1.0;
        }
        let mut best = 0.0_f64;
        for ta in &a.tree_numbers {
            for tb in &b.tree_numbers {
                best = best.max(self.pair_similarity(a, b, ta, tb));
            }
        }
        best
    }

    /// Best-match average of two UI sets; 0 if either is empty.
    pub fn set_similarity<S: AsRef<str>>(&self, a: &[S], b: &[S]) -> Result<f64, ScoringError> {
        let da = a.iter().map(|u| self.ontology.require(u.as_ref())).collect::<Result<Vec<_>, _>>()?;
        let db = b.iter().map(|u| self.ontology.require(u.as_ref())).collect::<Result<Vec<_>, _>>()?;
        if da.is_empty() || db.is_empty() {
            return Ok(0.0);
        }
        let matrix: Vec<Vec<f64>> =
            da.iter().map(|x| db.iter().map(|y| self.descriptor_similarity(x, y)).collect()).collect();
        let row_best: Vec<f64> = matrix.iter().map(|row| row.iter().copied().fold(0.0, f64::max)).collect();
        let col_best: Vec<f64> = (0..db.len()).map(|j| matrix.iter().map(|row| row[j]).fold(0.0, f64::max)).collect();
        let row_mean = stable_sum(row_best) / da.len() as f64;
        let col_mean = stable_sum(col_best) / db.len() as f64;
        Ok(0.5 * (row_mean + col_mean))
    }

    /// Hierarchy agreement between a source document and what was retrieved
    /// for it.
    pub fn collection_score(
        &self,
        source: &Document,
        retrieved: &[&Document],
        aggregation: CollectionAggregation,
    ) -> Result<f64, ScoringError> {
        if retrieved.is_empty() {
            return Err(ScoringError::EmptyCollection);
        }
        match aggregation {
            CollectionAggregation::Mean => {
                let scores = retrieved
                    .iter()
                    .map(|d| self.set_similarity(&source.mesh_uis, &d.mesh_uis))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(stable_sum(scores) / retrieved.len() as f64)
            }
            CollectionAggregation::Union => {
                let union: Vec<&str> = retrieved
                    .iter()
                    .flat_map(|d| d.mesh_uis.iter().map(String::as_str))
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let source: Vec<&str> = source.mesh_uis.iter().map(String::as_str).collect();
                self.set_similarity(&source, &union)
            }
        }
    }
}

fn normalized(v: &SparseVector) -> SparseVector {
    let norm = stable_sum(v.values().map(|w| w * w).collect()).sqrt();
    if norm == 0.0 {
        return SparseVector::new();
    }
    v.iter().map(|(t, w)| (t.clone(), w / norm)).collect()
}

/// Cosine between the source's unit TF-IDF vector and the unit-normalized
/// centroid of the retrieved documents' unit vectors.
pub fn tfidf_collection_score(
    source: &Document,
    retrieved: &[&Document],
    index: &CorpusIndex,
) -> Result<f64, ScoringError> {
    if retrieved.is_empty() {
        return Err(ScoringError::EmptyCollection);
    }
    let src = normalized(&index.doc_vector(&source.pmid)?);
    let mut parts: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    for d in retrieved {
        for (t, w) in normalized(&index.doc_vector(&d.pmid)?) {
            parts.entry(t).or_default().push(w);
        }
    }
    let n = retrieved.len() as f64;
    let centroid: SparseVector = parts.into_iter().map(|(t, ws)| (t, stable_sum(ws) / n)).collect();
    let centroid = normalized(&centroid);
    if src.is_empty() || centroid.is_empty() {
        return Ok(0.0);
    }
    let dot = stable_sum(src.iter().filter_map(|(t, w)| centroid.get(t).map(|c| w * c)).collect());
    Ok(dot.clamp(0.0, 1.0))
}

/// Scores a retrieved collection against its source document.
pub trait CollectionScorer: Send + Sync {
    fn kind(&self) -> ScorerKind;
    fn score(&self, source: &Document, retrieved: &[&Document]) -> Result<f64, ScoringError>;
}

pub struct MeshCollectionScorer<'a> {
    pub scorer: HierarchyScorer<'a>,
    pub aggregation: CollectionAggregation,
}

impl CollectionScorer for MeshCollectionScorer<'_> {
    fn kind(&self) -> ScorerKind {
        ScorerKind::Mesh
    }
    fn score(&self, source: &Document, retrieved: &[&Document]) -> Result<f64, ScoringError> {
        self.scorer.collection_score(source, retrieved, self.aggregation)
    }
}

pub struct TfidfCollectionScorer<'a>(pub &'a CorpusIndex);

impl CollectionScorer for TfidfCollectionScorer<'_> {
    fn kind(&self) -> ScorerKind {
        ScorerKind::Tfidf
    }
    fn score(&self, source: &Document, retrieved: &[&Document]) -> Result<f64, ScoringError> {
        tfidf_collection_score(source, retrieved, self.0)
    }
}

/// Scores every collection 0, so no candidate is ever preferred.
pub struct NullScorer;

impl CollectionScorer for NullScorer {
    fn kind(&self) -> ScorerKind {
        ScorerKind::Null
    }
    fn score(&self, _source: &Document, retrieved: &[&Document]) -> Result<f64, ScoringError> {
        if retrieved.is_empty() {
            return Err(ScoringError::EmptyCollection);
        }
        Ok(0.0)
    }
}
