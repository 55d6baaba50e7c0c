//! Line-delimited JSON files produced by the selection loop.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{DistillError, DistilledExample, PreferencePair};
use crate::llm::QuestionCandidate;

#[derive(Serialize, Deserialize)]
struct PairRecord {
    prompt: String,
    chosen: String,
    rejected: String,
    score_chosen: f64,
    score_rejected: f64,
    meta: PairMeta,
}

#[derive(Serialize, Deserialize)]
struct PairMeta {
    source_pmid: String,
    generator_chosen: String,
    generator_rejected: String,
    scorer_kind: String,
}

impl From<&PreferencePair> for PairRecord {
    fn from(p: &PreferencePair) -> Self {
        Self {
            prompt: p.prompt.clone(),
            chosen: p.chosen.clone(),
            rejected: p.rejected.clone(),
            score_chosen: p.score_chosen,
            score_rejected: p.score_rejected,
            meta: PairMeta {
                source_pmid: p.source_pmid.clone(),
                generator_chosen: p.generator_chosen.clone(),
                generator_rejected: p.generator_rejected.clone(),
                scorer_kind: p.scorer_kind.clone(),
            },
        }
    }
}

impl From<PairRecord> for PreferencePair {
    fn from(r: PairRecord) -> Self {
        Self {
            prompt: r.prompt,
            chosen: r.chosen,
            rejected: r.rejected,
            score_chosen: r.score_chosen,
            score_rejected: r.score_rejected,
            source_pmid: r.meta.source_pmid,
            generator_chosen: r.meta.generator_chosen,
            generator_rejected: r.meta.generator_rejected,
            scorer_kind: r.meta.scorer_kind,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct DistilledRecord {
    text: String,
    meta: DistilledMeta,
}

#[derive(Serialize, Deserialize)]
struct DistilledMeta {
    source_pmid: String,
    context_pmids: Vec<String>,
    question: String,
}

fn write_lines<T: Serialize>(path: &Path, records: impl Iterator<Item = T>) -> Result<(), DistillError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, &r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, DistillError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| DistillError::MalformedRecord { line: i + 1, reason: e.to_string() })?,
        );
    }
    Ok(out)
}

/// Writes `{prompt, chosen, rejected, score_chosen, score_rejected, meta}`
/// lines sorted by source pmid.
pub fn write_pairs(path: &Path, pairs: &[PreferencePair]) -> Result<(), DistillError> {
    let mut sorted: Vec<&PreferencePair> = pairs.iter().collect();
    sorted.sort_by(|a, b| a.source_pmid.cmp(&b.source_pmid));
    write_lines(path, sorted.into_iter().map(PairRecord::from))
}

pub fn read_pairs(path: &Path) -> Result<Vec<PreferencePair>, DistillError> {
    Ok(read_lines::<PairRecord>(path)?.into_iter().map(Into::into).collect())
}

/// Writes `{text, meta{source_pmid, context_pmids, question}}` lines sorted
/// by source pmid.
pub fn write_distilled(path: &Path, examples: &[DistilledExample]) -> Result<(), DistillError> {
    let mut sorted: Vec<&DistilledExample> = examples.iter().collect();
    sorted.sort_by(|a, b| a.source_pmid.cmp(&b.source_pmid));
    write_lines(
        path,
        sorted.into_iter().map(|e| DistilledRecord {
            text: e.rendered_text.clone(),
            meta: DistilledMeta {
                source_pmid: e.source_pmid.clone(),
                context_pmids: e.context_pmids.clone(),
                question: e.question.clone(),
            },
        }),
    )
}

pub fn read_distilled(path: &Path) -> Result<Vec<DistilledExample>, DistillError> {
    Ok(read_lines::<DistilledRecord>(path)?
        .into_iter()
        .map(|r| DistilledExample {
            question: r.meta.question,
            context_pmids: r.meta.context_pmids,
            rendered_text: r.text,
            source_pmid: r.meta.source_pmid,
        })
        .collect())
}

pub fn write_questions(path: &Path, candidates: &[QuestionCandidate]) -> Result<(), DistillError> {
    write_lines(path, candidates.iter())
}

/// A question to distill and the document it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question: String,
    pub source_pmid: String,
}

/// Reads questions from a generated-questions file (`text`, `source_pmid`),
/// a preference file (the `chosen` side), or plain `{question, source_pmid}`
/// lines.
pub fn read_questions(path: &Path) -> Result<Vec<QuestionRecord>, DistillError> {
    let values: Vec<Value> = read_lines(path)?;
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let s = |v: &Value| v.as_str().map(str::to_string);
            let found = if let Some(chosen) = v.get("chosen").and_then(s) {
                v.pointer("/meta/source_pmid").and_then(s).map(|p| (chosen, p))
            } else if let Some(text) = v.get("text").and_then(s) {
                v.get("source_pmid").and_then(s).map(|p| (text, p))
            } else {
                v.get("question").and_then(s).zip(v.get("source_pmid").and_then(s))
            };
            found.map(|(question, source_pmid)| QuestionRecord { question, source_pmid }).ok_or_else(|| {
                DistillError::MalformedRecord { line: i + 1, reason: "no question text with a source pmid".into() }
            })
        })
        .collect()
}

/// Result of checking a preference file on its own.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PreferenceCheck {
    pub records: usize,
    pub violations: Vec<String>,
}

impl PreferenceCheck {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks schema, `score_chosen > score_rejected + tie_margin`, distinct
/// texts, the trailing newline and pmid ordering.
pub fn verify_preference_file(path: &Path, tie_margin: f64) -> Result<PreferenceCheck, DistillError> {
    let raw = std::fs::read_to_string(path)?;
    let mut check = PreferenceCheck::default();
    if !raw.is_empty() && !raw.ends_with('\n') {
        check.violations.push("file does not end with a newline".into());
    }
    let mut last_pmid: Option<String> = None;
    for (i, line) in raw.lines().enumerate() {
        let n = i + 1;
        check.records += 1;
        let rec: PairRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                check.violations.push(format!("line {n}: schema: {e}"));
                continue;
            }
        };
        if rec.score_chosen <= rec.score_rejected + tie_margin {
            check.violations.push(format!(
                "line {n}: score_chosen {} is not above score_rejected {} + margin {tie_margin}",
                rec.score_chosen, rec.score_rejected
            ));
        }
        if rec.chosen == rec.rejected {
            check.violations.push(format!("line {n}: chosen equals rejected"));
        }
        if rec.chosen.trim().is_empty() || rec.rejected.trim().is_empty() {
            check.violations.push(format!("line {n}: empty question text"));
        }
        if let Some(prev) = &last_pmid {
            if prev > &rec.meta.source_pmid {
                check.violations.push(format!("line {n}: source pmid out of order"));
            }
        }
        last_pmid = Some(rec.meta.source_pmid);
    }
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(pmid: &str, hi: f64, lo: f64) -> PreferencePair {
        PreferencePair {
            prompt: format!("prompt {pmid}"),
            chosen: format!("good {pmid}?"),
            rejected: format!("bad {pmid}?"),
            score_chosen: hi,
            score_rejected: lo,
            source_pmid: pmid.into(),
            generator_chosen: "a".into(),
            generator_rejected: "b".into(),
            scorer_kind: "mesh".into(),
        }
    }

    #[test]
    fn empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("prefs.jsonl");
        write_pairs(&p, &[]).unwrap();
        assert_eq!(std::fs::read(&p).unwrap().len(), 0);
        let check = verify_preference_file(&p, 0.0).unwrap();
        assert_eq!(check.records, 0);
        assert!(check.ok());
    }

    #[test]
    fn pairs_round_trip_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("prefs.jsonl");
        let pairs = vec![pair("9", 0.1 + 0.2, 0.1), pair("10", 0.8, 1.0 / 3.0)];
        write_pairs(&p, &pairs).unwrap();
        let raw = std::fs::read_to_string(&p).unwrap();
        assert_eq!(raw.lines().count(), 2);
        assert!(raw.ends_with('\n'));
        for line in raw.lines() {
            let v: Value = serde_json::from_str(line).unwrap();
            for k in ["prompt", "chosen", "rejected", "score_chosen", "score_rejected", "meta"] {
                assert!(v.get(k).is_some(), "{k}");
            }
        }
        let back = read_pairs(&p).unwrap();
        assert_eq!(back, vec![pairs[1].clone(), pairs[0].clone()]);
        assert!(verify_preference_file(&p, 0.0).unwrap().ok());
        assert!(!verify_preference_file(&p, 0.5).unwrap().ok());
    }

    #[test]
    fn checker_flags_bad_records() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("prefs.jsonl");
        write_pairs(&p, &[pair("1", 0.5, 0.5)]).unwrap();
        std::fs::write(&p, std::fs::read_to_string(&p).unwrap() + "{\"prompt\":1}\n").unwrap();
        let check = verify_preference_file(&p, 0.0).unwrap();
        assert_eq!(check.records, 2);
        assert_eq!(check.violations.len(), 2);
    }

    #[test]
    fn distilled_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        let ex = vec![DistilledExample {
            question: "q?".into(),
            context_pmids: vec!["2".into(), "1".into()],
            rendered_text: "ctx\n\nQuestion: q?\n".into(),
            source_pmid: "5".into(),
        }];
        write_distilled(&p, &ex).unwrap();
        assert_eq!(read_distilled(&p).unwrap(), ex);
        let v: Value = serde_json::from_str(std::fs::read_to_string(&p).unwrap().lines().next().unwrap()).unwrap();
        assert_eq!(v["meta"]["context_pmids"][0], "2");
    }

    #[test]
    fn question_sources() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.jsonl");
        std::fs::write(
            &p,
            concat!(
                r#"{"source_pmid":"1","generator_id":"a","text":"t1?","template_id":"x"}"#, "\n",
                r#"{"prompt":"p","chosen":"t2?","rejected":"r","score_chosen":1,"score_rejected":0,"meta":{"source_pmid":"2"}}"#, "\n",
                r#"{"question":"t3?","source_pmid":"3"}"#, "\n",
            ),
        )
        .unwrap();
        let qs = read_questions(&p).unwrap();
        assert_eq!(qs.iter().map(|q| q.question.as_str()).collect::<Vec<_>>(), ["t1?", "t2?", "t3?"]);
        std::fs::write(&p, "{\"foo\":1}\n").unwrap();
        assert!(matches!(read_questions(&p), Err(DistillError::MalformedRecord { line: 1, .. })));
    }
}
