use std::fmt;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Yes,
    No,
    Maybe,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Yes => "yes",
            Label::No => "no",
            Label::Maybe => "maybe",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "yes" => Ok(Label::Yes),
            "no" => Ok(Label::No),
            "maybe" => Ok(Label::Maybe),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub id: String,
    pub question: String,
    pub contexts: Vec<String>,
    pub label: Label,
    pub mesh_terms: Vec<String>,
    pub year: Option<i32>,
}

/// Reads the PubMedQA layout: a JSON object mapping id → record with
/// `QUESTION`, `CONTEXTS`, `final_decision` and optional `MESHES`, `YEAR`.
/// Items come back ordered by id.
pub fn load_benchmark<R: Read>(reader: R) -> Result<Vec<BenchmarkItem>, EvalError> {
    let root: Map<String, Value> = serde_json::from_reader(reader).map_err(|e| EvalError::MalformedBenchmark {
        id: String::new(),
        reason: format!("not a JSON object of records: {e}"),
    })?;
    root.into_iter().map(|(id, rec)| item(id, rec)).collect()
}

pub fn load_benchmark_file(path: &Path) -> Result<Vec<BenchmarkItem>, EvalError> {
    load_benchmark(BufReader::new(File::open(path)?))
}

fn item(id: String, rec: Value) -> Result<BenchmarkItem, EvalError> {
    let bad = |reason: String| EvalError::MalformedBenchmark { id: id.clone(), reason };
    let question = rec
        .get("QUESTION")
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|q| !q.is_empty())
        .ok_or_else(|| bad("missing QUESTION".into()))?
        .to_string();
    let contexts = string_list(rec.get("CONTEXTS")).ok_or_else(|| bad("missing CONTEXTS".into()))?;
    let label = rec
        .get("final_decision")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing final_decision".into()))?
        .parse::<Label>()
        .map_err(bad)?;
    let mesh_terms = string_list(rec.get("MESHES")).unwrap_or_default();
    let year = match rec.get("YEAR") {
        None | Some(Value::Null) => None,
        Some(Value::Number(n)) => n.as_i64().map(|y| y as i32),
        Some(Value::String(s)) => Some(s.trim().parse::<i32>().map_err(|_| bad(format!("bad YEAR {s:?}")))?),
        Some(other) => return Err(bad(format!("bad YEAR {other}"))),
    };
    Ok(BenchmarkItem { id, question, contexts, label, mesh_terms, year })
}

fn string_list(v: Option<&Value>) -> Option<Vec<String>> {
    v?.as_array()?.iter().map(|x| x.as_str().map(str::to_string)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_entries() {
        let src = r#"{
          "2": {"QUESTION": "Is B?", "CONTEXTS": ["c"], "final_decision": "no", "MESHES": ["Male"], "YEAR": "2005"},
          "1": {"QUESTION": "Is A?", "CONTEXTS": ["x", "y"], "final_decision": "yes", "YEAR": 2001}
        }"#;
        let items = load_benchmark(src.as_bytes()).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].id, "1");
        assert_eq!(items[0].label, Label::Yes);
        assert_eq!(items[0].year, Some(2001));
        assert!(items[0].mesh_terms.is_empty());
        assert_eq!(items[1].label, Label::No);
        assert_eq!(items[1].year, Some(2005));
    }

    #[test]
    fn case_folded_label() {
        let src = r#"{"7": {"QUESTION": "q", "CONTEXTS": [], "final_decision": "Maybe"}}"#;
        let items = load_benchmark(src.as_bytes()).unwrap();
        assert_eq!(items[0].label, Label::Maybe);
        assert_eq!(items[0].year, None);
    }

    #[test]
    fn missing_contexts_names_id() {
        let src = r#"{"99": {"QUESTION": "q", "final_decision": "yes"}}"#;
        match load_benchmark(src.as_bytes()) {
            Err(EvalError::MalformedBenchmark { id, reason }) => {
                assert_eq!(id, "99");
                assert!(reason.contains("CONTEXTS"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_label() {
        let src = r#"{"1": {"QUESTION": "q", "CONTEXTS": [], "final_decision": "perhaps"}}"#;
        assert!(matches!(load_benchmark(src.as_bytes()), Err(EvalError::MalformedBenchmark { .. })));
    }
}
