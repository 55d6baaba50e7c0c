use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use super::DistillError;
use crate::corpus::{Document, DocumentStore, Retriever};
use crate::llm::{render_generation_prompt, Gateway, PromptTemplate, QuestionCandidate};
use crate::similarity::CollectionScorer;
use crate::util::{bounded_map, stable_sum};

/// What a candidate question retrieves with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryMode {
    #[default]
    Question,
    QuestionWithSource,
}

impl QueryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryMode::Question => "question",
            QueryMode::QuestionWithSource => "question-with-source",
        }
    }
}

impl fmt::Display for QueryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "question" => Ok(Self::Question),
            "question-with-source" => Ok(Self::QuestionWithSource),
            other => Err(format!("unknown query mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub score_chosen: f64,
    pub score_rejected: f64,
    pub source_pmid: String,
    pub generator_chosen: String,
    pub generator_rejected: String,
    pub scorer_kind: String,
}

impl PreferencePair {
    pub fn margin(&self) -> f64 {
        self.score_chosen - self.score_rejected
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistillStats {
    pub documents_processed: usize,
    pub pairs_emitted: usize,
    pub pairs_skipped_tie: usize,
    pub failures: usize,
    pub mean_margin: f64,
    pub wins: BTreeMap<String, usize>,
    pub failure_reasons: BTreeMap<String, String>,
    pub interrupted: bool,
}

pub struct PairRun {
    pub pairs: Vec<PreferencePair>,
    pub stats: DistillStats,
}

/// Everything one pass of the selection loop needs.
pub struct PairBuilder<'a> {
    pub store: &'a DocumentStore,
    pub retriever: &'a Retriever<'a>,
    pub scorer: &'a dyn CollectionScorer,
    pub gateway: &'a Gateway,
    pub template: &'a PromptTemplate,
    pub generators: Vec<String>,
    pub candidates_per_model: u32,
    pub query_mode: QueryMode,
    pub tie_margin: f64,
    pub cancel: Option<&'a AtomicBool>,
}

enum Outcome {
    Pair(PreferencePair),
    Tie,
    Failed(String),
    Skipped,
}

struct Scored {
    candidate: QuestionCandidate,
    score: f64,
}

impl PairBuilder<'_> {
    fn validate(&self) -> Result<(), DistillError> {
        if self.generators.len() != 2 {
            return Err(DistillError::Config(format!("expected two generator ids, got {}", self.generators.len())));
        }
        if self.generators[0] == self.generators[1] {
            return Err(DistillError::Config(format!("generator ids must differ (both {:?})", self.generators[0])));
        }
        if self.candidates_per_model == 0 {
            return Err(DistillError::Config("candidates per model must be at least 1".into()));
        }
        if !self.tie_margin.is_finite() || self.tie_margin < 0.0 {
            return Err(DistillError::Config(format!("tie margin {} must be finite and ≥ 0", self.tie_margin)));
        }
        if self.store.is_empty() {
            return Err(DistillError::Config("document store is empty".into()));
        }
        Ok(())
    }

    fn query_for(&self, question: &str, doc: &Document) -> String {
        match self.query_mode {
            QueryMode::Question => question.to_string(),
            QueryMode::QuestionWithSource => format!("{question}\n{}", doc.text()),
        }
    }

    fn score_candidate(&self, doc: &Document, candidate: QuestionCandidate) -> Result<Scored, String> {
        let query = self.query_for(&candidate.text, doc);
        let retrieval = self.retriever.retrieve(&query).map_err(|e| format!("retrieval: {e}"))?;
        if retrieval.hits.is_empty() {
            return Err(format!("retrieval: no documents for {:?}", candidate.text));
        }
        let retrieved: Vec<&Document> = retrieval
            .hits
            .iter()
            .map(|h| self.store.get(&h.pmid).ok_or_else(|| format!("retrieved unknown pmid {}", h.pmid)))
            .collect::<Result<_, _>>()?;
        let score = self.scorer.score(doc, &retrieved).map_err(|e| format!("scoring: {e}"))?;
        Ok(Scored { candidate, score })
    }

    fn process(&self, doc: &Document) -> Outcome {
        if self.cancel.is_some_and(|c| c.load(Ordering::SeqCst)) {
            return Outcome::Skipped;
        }
        let prompt = match render_generation_prompt(doc, self.template) {
            Ok(p) => p,
            Err(e) => return Outcome::Failed(format!("template: {e}")),
        };
        let mut scored = Vec::new();
        for model in &self.generators {
            for variant in 0..self.candidates_per_model {
                let candidate = match self.gateway.generate_question(doc, self.template, model, variant) {
                    Ok(c) => c,
                    Err(e) => return Outcome::Failed(format!("generation ({model}): {e}")),
                };
                match self.score_candidate(doc, candidate) {
                    Ok(s) => scored.push(s),
                    Err(e) => return Outcome::Failed(e),
                }
            }
        }
        let Some((best, worst)) = select_pair(&scored, self.tie_margin) else {
            return Outcome::Tie;
        };
        Outcome::Pair(PreferencePair {
            prompt,
            chosen: best.candidate.text.clone(),
            rejected: worst.candidate.text.clone(),
            score_chosen: best.score,
            score_rejected: worst.score,
            source_pmid: doc.pmid.clone(),
            generator_chosen: best.candidate.generator_id.clone(),
            generator_rejected: worst.candidate.generator_id.clone(),
            scorer_kind: self.scorer.kind().as_str().to_string(),
        })
    }
}

/// Highest score wins, lowest loses; text order settles equal scores so the
/// result does not depend on generator order. `None` when the spread does
/// not exceed `tie_margin` or both texts are the same.
fn select_pair(scored: &[Scored], tie_margin: f64) -> Option<(&Scored, &Scored)> {
    let key =
        |a: &&Scored, b: &&Scored| a.score.total_cmp(&b.score).then_with(|| b.candidate.text.cmp(&a.candidate.text));
    let best = scored.iter().max_by(key)?;
    let worst = scored.iter().min_by(key)?;
    if best.score <= worst.score + tie_margin || best.candidate.text == worst.candidate.text {
        return None;
    }
    Some((best, worst))
}

/// Runs the selection loop over every stored document. Output is ordered by
/// ascending source pmid whatever the internal parallelism.
pub fn build_preference_pairs(builder: &PairBuilder<'_>) -> Result<PairRun, DistillError> {
    builder.validate()?;
    let docs: Vec<&Document> = builder.store.iter().collect();
    let outcomes = bounded_map(&docs, builder.gateway.config().max_in_flight, |d| builder.process(d));

    let mut stats = DistillStats::default();
    for g in &builder.generators {
        stats.wins.insert(g.clone(), 0);
    }
    let mut pairs = Vec::new();
    for (doc, outcome) in docs.iter().zip(outcomes) {
        match outcome {
            Outcome::Skipped => {
                stats.interrupted = true;
                continue;
            }
            Outcome::Pair(p) => {
                *stats.wins.entry(p.generator_chosen.clone()).or_default() += 1;
                pairs.push(p);
            }
            Outcome::Tie => stats.pairs_skipped_tie += 1,
            Outcome::Failed(reason) => {
                log::warn!("document {}: {reason}", doc.pmid);
                stats.failures += 1;
                stats.failure_reasons.insert(doc.pmid.clone(), reason);
            }
        }
        stats.documents_processed += 1;
    }
    stats.pairs_emitted = pairs.len();
    stats.mean_margin = if pairs.is_empty() {
        0.0
    } else {
        stable_sum(pairs.iter().map(PreferencePair::margin).collect()) / pairs.len() as f64
    };
    Ok(PairRun { pairs, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scored(generator: &str, text: &str, score: f64) -> Scored {
        Scored {
            candidate: QuestionCandidate {
                source_pmid: "1".into(),
                generator_id: generator.into(),
                text: text.into(),
                template_id: "t".into(),
            },
            score,
        }
    }

    #[test]
    fn argmax_selection() {
        let c = [scored("a", "first?", 0.8), scored("b", "second?", 0.6)];
        let (best, worst) = select_pair(&c, 0.0).unwrap();
        assert_eq!(best.candidate.text, "first?");
        assert_eq!(worst.candidate.text, "second?");
        assert!((best.score - worst.score - 0.2).abs() < 1e-12);
    }

    #[test]
    fn ties_and_margin() {
        assert!(select_pair(&[scored("a", "x?", 0.5), scored("b", "y?", 0.5)], 0.0).is_none());
        assert!(select_pair(&[scored("a", "x?", 0.8), scored("b", "y?", 0.6)], 0.25).is_none());
        assert!(select_pair(&[scored("a", "x?", 0.9), scored("b", "x?", 0.1)], 0.0).is_none());
    }

    #[test]
    fn selection_ignores_generator_order() {
        let fwd = [scored("a", "p?", 0.3), scored("b", "q?", 0.7), scored("a", "r?", 0.7), scored("b", "s?", 0.1)];
        let rev: Vec<Scored> =
            fwd.iter().rev().map(|s| scored(&s.candidate.generator_id, &s.candidate.text, s.score)).collect();
        let (b1, w1) = select_pair(&fwd, 0.0).unwrap();
        let (b2, w2) = select_pair(&rev, 0.0).unwrap();
        assert_eq!((&b1.candidate.text, &w1.candidate.text), (&b2.candidate.text, &w2.candidate.text));
        assert_eq!(b1.candidate.text, "q?");
        assert_eq!(w1.candidate.text, "s?");
    }
}
