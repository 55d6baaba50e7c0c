use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// A PubMed-style record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub pmid: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    #[serde(default)]
    pub mesh_uis: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pub_year: Option<i32>,
}

impl Document {
    /// Title and abstract, the text that gets indexed and embedded.
    pub fn text(&self) -> String {
        format!("{}\n{}", self.title, self.abstract_text)
    }
}

/// Documents keyed by pmid, iterated in ascending pmid order.
#[derive(Debug, Clone, Default)]
pub struct DocumentStore {
    docs: BTreeMap<String, Document>,
}

impl DocumentStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, mut doc: Document) -> Result<(), CorpusError> {
        if self.docs.contains_key(&doc.pmid) {
            return Err(CorpusError::DuplicatePmid(doc.pmid));
        }
        let mut seen = std::collections::HashSet::new();
        doc.mesh_uis.retain(|u| seen.insert(u.clone()));
        self.docs.insert(doc.pmid.clone(), doc);
        Ok(())
    }

    pub fn from_documents(docs: impl IntoIterator<Item = Document>) -> Result<Self, CorpusError> {
        let mut store = Self::new();
        for d in docs {
            store.insert(d)?;
        }
        Ok(store)
    }

    pub fn get(&self, pmid: &str) -> Option<&Document> {
        self.docs.get(pmid)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.docs.values()
    }

    pub fn pmids(&self) -> impl Iterator<Item = &str> {
        self.docs.keys().map(String::as_str)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for d in self.iter() {
            serde_json::to_writer(&mut w, d)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Reads one JSON document per line. Blank lines are ignored.
pub fn ingest<R: BufRead>(source: R) -> Result<DocumentStore, CorpusError> {
    let mut store = DocumentStore::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line)
            .map_err(|e| CorpusError::MalformedRecord { line: lineno, reason: e.to_string() })?;
        if doc.pmid.trim().is_empty() {
            return Err(CorpusError::MalformedRecord { line: lineno, reason: "empty pmid".into() });
        }
        store.insert(doc)?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(pmid: &str) -> String {
        format!(r#"{{"pmid":"{pmid}","title":"t {pmid}","abstract":"a","mesh_uis":["D1"],"pub_year":2001}}"#)
    }

    #[test]
    fn three_lines() {
        let src = [line("1"), line("2"), line("3")].join("\n");
        let store = ingest(src.as_bytes()).unwrap();
        assert_eq!(store.len(), 3);
        assert_eq!(store.get("2").unwrap().pub_year, Some(2001));
    }

    #[test]
    fn duplicate_pmid() {
        let src = [line("123"), line("9"), line("123")].join("\n");
        assert!(matches!(ingest(src.as_bytes()), Err(CorpusError::DuplicatePmid(p)) if p == "123"));
    }

    #[test]
    fn missing_pmid_reports_line() {
        let src = format!("{}\n\n{}", line("1"), r#"{"title":"x","abstract":"y","mesh_uis":[]}"#);
        match ingest(src.as_bytes()) {
            Err(CorpusError::MalformedRecord { line, reason }) => {
                assert_eq!(line, 3);
                assert!(reason.contains("pmid"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn optional_year_and_mesh_dedup() {
        let src = r#"{"pmid":"7","title":"x","abstract":"y","mesh_uis":["D1","D2","D1"]}"#;
        let store = ingest(src.as_bytes()).unwrap();
        let d = store.get("7").unwrap();
        assert_eq!(d.pub_year, None);
        assert_eq!(d.mesh_uis, ["D1", "D2"]);
    }

    #[test]
    fn write_read_back() {
        let src = [line("2"), line("1")].join("\n");
        let store = ingest(src.as_bytes()).unwrap();
        let mut buf = Vec::new();
        store.write_jsonl(&mut buf).unwrap();
        let back = ingest(buf.as_slice()).unwrap();
        assert_eq!(store.iter().collect::<Vec<_>>(), back.iter().collect::<Vec<_>>());
        assert!(String::from_utf8(buf).unwrap().starts_with(r#"{"pmid":"1""#));
    }
}
