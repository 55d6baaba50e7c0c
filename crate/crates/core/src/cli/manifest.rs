use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::config::RunConfig;
use crate::util::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> std::io::Result<Self> {
        Ok(Self { path: path.display().to_string(), sha256: sha256_hex(&std::fs::read(path)?) })
    }
}

/// Wall-clock fields live here and nowhere else, so two runs of the same
/// stage differ only inside this section.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub elapsed_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub status: String,
    pub config_digest: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, FileDigest>,
    pub outputs: BTreeMap<String, FileDigest>,
    pub ontology_source: Option<String>,
    pub scorer: Option<String>,
    pub retriever: Option<String>,
    pub top_k: usize,
    pub seed: u64,
    pub stats: serde_json::Value,
    pub timing: Timing,
}

pub fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig, started_unix_ms: u128) -> Self {
        Self {
            command: command.to_string(),
            status: "ok".into(),
            config_digest: cfg.digest(),
            config: serde_json::from_str(&cfg.canonical_json()).expect("config is JSON"),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            ontology_source: None,
            scorer: None,
            retriever: None,
            top_k: cfg.retrieval.top_k,
            seed: cfg.seed,
            stats: serde_json::Value::Null,
            timing: Timing { started_unix_ms, finished_unix_ms: 0, elapsed_ms: 0 },
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) -> std::io::Result<()> {
        self.inputs.insert(name.to_string(), FileDigest::of(path)?);
        Ok(())
    }

    pub fn output(&mut self, name: &str, path: &Path) -> std::io::Result<()> {
        self.outputs.insert(name.to_string(), FileDigest::of(path)?);
        Ok(())
    }

    /// Stamps the finish time and writes `<out>/<command>.manifest.json`.
    pub fn write(&mut self, out_dir: &Path) -> std::io::Result<()> {
        self.timing.finished_unix_ms = unix_ms();
        self.timing.elapsed_ms = self.timing.finished_unix_ms.saturating_sub(self.timing.started_unix_ms);
        let mut text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(out_dir.join(format!("{}.manifest.json", self.command)), text)
    }
}
