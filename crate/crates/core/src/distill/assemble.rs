use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DistillError, QuestionRecord};
use crate::corpus::{DocumentStore, Retriever};
use crate::llm::PromptTemplate;

/// Line placed between context blocks.
pub const CONTEXT_DELIMITER: &str = "-----";

/// A question with its retrieved context rendered into pretraining text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistilledExample {
    pub question: String,
    pub context_pmids: Vec<String>,
    pub rendered_text: String,
    pub source_pmid: String,
}

impl DistilledExample {
    pub fn context_blocks(&self) -> usize {
        self.context_pmids.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembleStats {
    pub questions: usize,
    pub emitted: usize,
    pub skipped_empty_retrieval: usize,
    pub failures: usize,
}

/// Retrieves context for every question and renders `template` with the
/// blocks (title and abstract, retrieval order) and the question. Output is
/// sorted by source pmid, stable within one source.
pub fn assemble_distilled(
    questions: &[QuestionRecord],
    store: &DocumentStore,
    retriever: &Retriever<'_>,
    template: &PromptTemplate,
) -> Result<(Vec<DistilledExample>, AssembleStats), DistillError> {
    let placeholders = template.placeholders();
    for needed in ["context", "question"] {
        if !placeholders.iter().any(|p| p == needed) {
            return Err(DistillError::Config(format!("template {} lacks {{{needed}}}", template.id)));
        }
    }
    let mut stats = AssembleStats { questions: questions.len(), ..Default::default() };
    let mut out = Vec::new();
    for q in questions {
        let retrieval = match retriever.retrieve(&q.question) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("question from {}: {e}", q.source_pmid);
                stats.failures += 1;
                continue;
            }
        };
        if retrieval.hits.is_empty() {
            stats.skipped_empty_retrieval += 1;
            continue;
        }
        let mut blocks = Vec::with_capacity(retrieval.hits.len());
        let mut pmids = Vec::with_capacity(retrieval.hits.len());
        for hit in &retrieval.hits {
            let doc = store
                .get(&hit.pmid)
                .ok_or_else(|| DistillError::Config(format!("retrieved pmid {} is not in the store", hit.pmid)))?;
            blocks.push(format!("{}\n{}", doc.title, doc.abstract_text));
            pmids.push(hit.pmid.clone());
        }
        let context = blocks.join(&format!("\n{CONTEXT_DELIMITER}\n"));
        let bindings = BTreeMap::from([("context", context.as_str()), ("question", q.question.as_str())]);
        let rendered_text = template.render(&bindings).map_err(|e| DistillError::Config(e.to_string()))?;
        out.push(DistilledExample {
            question: q.question.clone(),
            context_pmids: pmids,
            rendered_text,
            source_pmid: q.source_pmid.clone(),
        });
    }
    out.sort_by(|a, b| a.source_pmid.cmp(&b.source_pmid));
    stats.emitted = out.len();
    Ok((out, stats))
}
