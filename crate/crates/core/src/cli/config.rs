use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::RetrievalMode;
use crate::distill::QueryMode;
use crate::eval::InferenceSetting;
use crate::llm::GatewayConfig;
use crate::similarity::{CollectionAggregation, ScorerKind, TermMetric};
use crate::util::sha256_hex;

/// Which side of a client interface talks to a real service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Http,
    Mock,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub corpus: Option<PathBuf>,
    pub mesh: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub questions: Option<PathBuf>,
    pub benchmark: Option<PathBuf>,
    pub answers: Option<PathBuf>,
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub model_a: String,
    pub model_b: String,
    pub candidates_per_model: u32,
    pub query_mode: QueryMode,
    pub backend: Backend,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            model_a: "llama-3-8b-instruct".into(),
            model_b: "biomistral-7b".into(),
            candidates_per_model: 1,
            query_mode: QueryMode::Question,
            backend: Backend::Http,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub top_k: usize,
    pub mode: RetrievalMode,
    pub embedding_model: String,
    pub embedder: Backend,
    pub mock_dim: usize,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self {
            top_k: 4,
            mode: RetrievalMode::Dense,
            embedding_model: "bge-large-en-v1.5".into(),
            embedder: Backend::Http,
            mock_dim: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerSection {
    pub kind: ScorerKind,
    pub metric: TermMetric,
    pub aggregation: CollectionAggregation,
    pub tie_margin: f64,
}

impl Default for ScorerSection {
    fn default() -> Self {
        Self {
            kind: ScorerKind::Mesh,
            metric: TermMetric::WuPalmer,
            aggregation: CollectionAggregation::Mean,
            tie_margin: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateSection {
    pub question: String,
    pub distill: String,
}

impl Default for TemplateSection {
    fn default() -> Self {
        Self { question: "question-v1".into(), distill: "distill-v1".into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub setting: InferenceSetting,
    /// Answering model; falls back to `generators.model_a`.
    pub model: Option<String>,
    /// Comma-separated inclusive ranges, e.g. `2001-2004,2005-2007`.
    pub year_ranges: Option<String>,
    pub mesh_slices: Vec<String>,
}

/// Everything a stage consumes. The digest is taken over the JSON
/// serialization, whose field order is fixed by these declarations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub gateway: GatewayConfig,
    pub generators: GeneratorConfig,
    pub retrieval: RetrievalSection,
    pub scorer: ScorerSection,
    pub templates: TemplateSection,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_sections() {
        let cfg: RunConfig = toml::from_str(
            "seed = 7\n[retrieval]\ntop_k = 2\nmode = \"random\"\n[scorer]\nkind = \"tfidf\"\nmetric = \"lin\"\n[gateway]\nmax_in_flight = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.retrieval.top_k, 2);
        assert_eq!(cfg.retrieval.mode, RetrievalMode::Random);
        assert_eq!(cfg.scorer.kind, ScorerKind::Tfidf);
        assert_eq!(cfg.scorer.metric, TermMetric::Lin);
        assert_eq!(cfg.gateway.max_in_flight, 2);
        assert_eq!(cfg.gateway.max_retries, 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("[scorer]\nknid = \"mesh\"\n").is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.retrieval.top_k = 8;
        assert_ne!(a.digest(), b.digest());
    }
}
