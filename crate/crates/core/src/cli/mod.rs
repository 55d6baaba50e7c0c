//! The `kailin` command line: one subcommand per pipeline stage.
//!
//! Settings merge as flags > environment > config file > defaults. Every
//! stage writes `<out>/<stage>.manifest.json`.

mod config;
mod manifest;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

pub use config::{Backend, RunConfig};
pub use manifest::{FileDigest, Manifest, Timing};

use crate::corpus::{
    ingest, CorpusError, CorpusIndex, DocumentStore, EmbedError, Embedder, EmbeddingClient, HttpEmbedder, MockEmbedder,
    MockKind, RetrievalConfig, RetrievalMode, Retriever,
};
use crate::distill::{
    assemble_distilled, build_preference_pairs, read_pairs, read_questions, verify_preference_file, write_distilled,
    write_pairs, write_questions, DistillError, PairBuilder, QueryMode, QuestionRecord,
};
use crate::eval::{
    evaluate, load_benchmark_file, load_stub_answers, slice, AnswerParser, AnswerSource, EvalConfig, EvalError,
    GatewayAnswers, InferenceSetting, SliceSpec,
};
use crate::llm::mock::QuestionWriter;
use crate::llm::{ChatTransport, Gateway, HttpTransport, PromptTemplate};
use crate::mesh::{load_mesh_file, write_canonical, AnnotationCounts, MeshError, MeshOntology};
use crate::similarity::{
    CollectionScorer, HierarchyScorer, MeshCollectionScorer, NullScorer, ScorerKind, ScoringError, TermMetric,
    TfidfCollectionScorer,
};
use crate::util::bounded_map;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_EXTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "kailin", version, about = "Knowledge-hierarchy guided question distillation for biomedical corpora")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Opts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Normalize a JSONL corpus (and optionally a MeSH file) into the output dir.
    Ingest,
    /// Build the TF-IDF index for a corpus.
    Index,
    /// Generate candidate questions with both generators.
    Questions,
    /// Build preference pairs scored by retrieval similarity.
    Prefs,
    /// Assemble question + retrieved-context pretraining text.
    Distill,
    /// Evaluate answers on a PubMedQA-style benchmark.
    Eval,
    /// Check a preference file and summarize it.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Index => "index",
            Command::Questions => "questions",
            Command::Prefs => "prefs",
            Command::Distill => "distill",
            Command::Eval => "eval",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Opts {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Corpus JSONL (pmid, title, abstract, mesh_uis, pub_year).
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// MeSH descriptor file (.bin, .xml or canonical .jsonl).
    #[arg(long, global = true)]
    pub mesh: Option<PathBuf>,
    /// Prebuilt TF-IDF index; built in memory when absent.
    #[arg(long, global = true)]
    pub index: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub scorer: Option<ScorerKind>,
    #[arg(long, global = true)]
    pub retriever: Option<RetrievalMode>,
    /// Documents retrieved per query [default: 4].
    #[arg(long, global = true)]
    pub top_k: Option<usize>,
    /// Seed for random retrieval and generation requests.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub model_a: Option<String>,
    #[arg(long, global = true)]
    pub model_b: Option<String>,
    #[arg(long, global = true)]
    pub setting: Option<InferenceSetting>,
    /// Stub answers JSONL ({id, text}) used instead of a model.
    #[arg(long, global = true)]
    pub answers: Option<PathBuf>,
    /// Benchmark JSON for `eval`.
    #[arg(long, global = true)]
    pub benchmark: Option<PathBuf>,
    /// Questions JSONL for `distill`; generated with model A when absent.
    #[arg(long, global = true)]
    pub questions: Option<PathBuf>,
    /// Preference file for `report`.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true)]
    pub metric: Option<TermMetric>,
    #[arg(long, global = true)]
    pub tie_margin: Option<f64>,
    #[arg(long, global = true)]
    pub candidates_per_model: Option<u32>,
    #[arg(long, global = true)]
    pub query_mode: Option<QueryMode>,
    #[arg(long, global = true)]
    pub embedding_model: Option<String>,
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Chat backend; `mock` writes questions locally.
    #[arg(long, global = true, value_enum)]
    pub llm: Option<Backend>,
    /// Embedding backend; `mock` hashes terms locally.
    #[arg(long, global = true, value_enum)]
    pub embedder: Option<Backend>,
    #[arg(long, global = true, env = "KAILIN_BASE_URL")]
    pub base_url: Option<String>,
    /// Year slices for `eval`, e.g. 2001-2004,2005-2007.
    #[arg(long, global = true)]
    pub year_ranges: Option<String>,
    /// MeSH term slice for `eval`; repeatable.
    #[arg(long = "mesh-slice", global = true)]
    pub mesh_slices: Vec<String>,
    /// Log request and response bodies (API key redacted).
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    External(String),
    Interrupted,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::External(_) | CliError::Interrupted => EXIT_EXTERNAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::External(m) => write!(f, "external service error: {m}"),
            CliError::Interrupted => f.write_str("interrupted"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Embedding(EmbedError::Service(m)) => CliError::External(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<DistillError> for CliError {
    fn from(e: DistillError) -> Self {
        match e {
            DistillError::Config(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::OverlappingYearRanges { .. } | EvalError::InvalidYearRange(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ScoringError> for CliError {
    fn from(e: ScoringError) -> Self {
        match e {
            ScoringError::MissingAnnotationCounts(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

/// Parses `argv` (program name first) and runs one stage.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_with_cancel(argv, Arc::new(AtomicBool::new(false)))
}

/// As [`run`], stopping early once `cancel` is set.
pub fn run_with_cancel<I, T>(argv: I, cancel: Arc<AtomicBool>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    EXIT_OK
                }
                _ => {
                    let _ = e.print();
                    eprintln!("\nsubcommands: ingest | index | questions | prefs | distill | eval | report");
                    EXIT_USAGE
                }
            };
        }
    };
    let command = cli.command;
    match execute(cli, &cancel) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("kailin {}: {e}", command.name());
            if matches!(e, CliError::Usage(_)) {
                eprintln!(
                    "synopsis: kailin {} [--config FILE] [OPTIONS]; see `kailin {} --help`",
                    command.name(),
                    command.name()
                );
            }
            e.exit_code()
        }
    }
}

/// Applies flags and environment over the config file over defaults.
pub fn merge_config(opts: &Opts) -> Result<RunConfig, CliError> {
    let mut cfg = match &opts.config {
        Some(p) => RunConfig::load(p).map_err(CliError::Usage)?,
        None => RunConfig::default(),
    };
    let paths = &mut cfg.paths;
    for (slot, flag) in [
        (&mut paths.corpus, &opts.corpus),
        (&mut paths.mesh, &opts.mesh),
        (&mut paths.index, &opts.index),
        (&mut paths.out, &opts.out),
        (&mut paths.cache_dir, &opts.cache_dir),
        (&mut paths.questions, &opts.questions),
        (&mut paths.benchmark, &opts.benchmark),
        (&mut paths.answers, &opts.answers),
        (&mut paths.input, &opts.input),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    if let Some(v) = opts.scorer {
        cfg.scorer.kind = v;
    }
    if let Some(v) = opts.metric {
        cfg.scorer.metric = v;
    }
    if let Some(v) = opts.tie_margin {
        cfg.scorer.tie_margin = v;
    }
    if let Some(v) = opts.retriever {
        cfg.retrieval.mode = v;
    }
    if let Some(v) = opts.top_k {
        cfg.retrieval.top_k = v;
    }
    if let Some(v) = &opts.embedding_model {
        cfg.retrieval.embedding_model.clone_from(v);
    }
    if let Some(v) = opts.embedder {
        cfg.retrieval.embedder = v;
    }
    if let Some(v) = opts.seed {
        cfg.seed = v;
        cfg.gateway.seed = Some(v);
    }
    if let Some(v) = &opts.model_a {
        cfg.generators.model_a.clone_from(v);
    }
    if let Some(v) = &opts.model_b {
        cfg.generators.model_b.clone_from(v);
    }
    if let Some(v) = opts.candidates_per_model {
        cfg.generators.candidates_per_model = v;
    }
    if let Some(v) = opts.query_mode {
        cfg.generators.query_mode = v;
    }
    if let Some(v) = opts.llm {
        cfg.generators.backend = v;
    }
    if let Some(v) = &opts.base_url {
        cfg.gateway.base_url.clone_from(v);
    }
    if let Some(v) = opts.setting {
        cfg.eval.setting = v;
    }
    if let Some(v) = &opts.year_ranges {
        cfg.eval.year_ranges = Some(v.clone());
    }
    if !opts.mesh_slices.is_empty() {
        cfg.eval.mesh_slices.clone_from(&opts.mesh_slices);
    }
    if cfg.retrieval.top_k == 0 {
        return Err(CliError::Usage("--top-k must be at least 1".into()));
    }
    Ok(cfg)
}

struct Stage<'a> {
    cfg: RunConfig,
    out: PathBuf,
    cancel: &'a AtomicBool,
    manifest: Manifest,
}

fn execute(cli: Cli, cancel: &AtomicBool) -> Result<(), CliError> {
    let started = manifest::unix_ms();
    let cfg = merge_config(&cli.opts)?;
    let out = cfg.paths.out.clone().unwrap_or_else(|| PathBuf::from("kailin-out"));
    std::fs::create_dir_all(&out).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out.display())))?;
    let manifest = Manifest::new(cli.command.name(), &cfg, started);
    let mut stage = Stage { cfg, out, cancel, manifest };
    let result = match cli.command {
        Command::Ingest => stage.ingest(),
        Command::Index => stage.index(),
        Command::Questions => stage.questions(),
        Command::Prefs => stage.prefs(),
        Command::Distill => stage.distill(),
        Command::Eval => stage.eval(),
        Command::Report => stage.report(),
    };
    let result = match result {
        Ok(()) if cancel.load(Ordering::SeqCst) => Err(CliError::Interrupted),
        other => other,
    };
    stage.manifest.status = match &result {
        Ok(()) => "ok".into(),
        Err(CliError::Interrupted) => "interrupted".into(),
        Err(_) => "failed".into(),
    };
    let written = stage.manifest.write(&stage.out);
    result.and(written.map_err(CliError::from))
}

fn require<'p>(path: &'p Option<PathBuf>, flag: &str) -> Result<&'p Path, CliError> {
    path.as_deref().ok_or_else(|| CliError::Usage(format!("{flag} is required")))
}

fn stats<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("stats serialize")
}

impl Stage<'_> {
    fn load_corpus(&mut self) -> Result<DocumentStore, CliError> {
        let path = require(&self.cfg.paths.corpus, "--corpus")?.to_path_buf();
        let file = File::open(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let store = ingest(BufReader::new(file))?;
        self.manifest.input("corpus", &path)?;
        Ok(store)
    }

    fn load_ontology(&mut self) -> Result<MeshOntology, CliError> {
        let path = require(&self.cfg.paths.mesh, "--mesh")?.to_path_buf();
        let ontology = load_mesh_file(&path)?;
        for w in ontology.warnings() {
            log::warn!("{}: tree {} has no parent {}", w.ui, w.tree_number, w.missing_parent);
        }
        self.manifest.input("mesh", &path)?;
        self.manifest.ontology_source = ontology.source().map(str::to_string);
        Ok(ontology)
    }

    fn load_index(&mut self, store: &DocumentStore) -> Result<CorpusIndex, CliError> {
        match self.cfg.paths.index.clone() {
            Some(path) => {
                let file = File::open(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                let index = CorpusIndex::read(BufReader::new(file), &crate::corpus::tokenize::fingerprint())?;
                index.check_covers(store)?;
                self.manifest.input("index", &path)?;
                Ok(index)
            }
            None => Ok(CorpusIndex::build(store)?),
        }
    }

    fn embeddings(&self) -> EmbeddingClient {
        let r = &self.cfg.retrieval;
        let embedder: Arc<dyn Embedder> = match r.embedder {
            Backend::Mock => Arc::new(MockEmbedder::new(r.embedding_model.clone(), MockKind::HashedTerms, r.mock_dim)),
            Backend::Http => Arc::new(HttpEmbedder::new(
                self.cfg.gateway.base_url.clone(),
                r.embedding_model.clone(),
                std::env::var(&self.cfg.gateway.api_key_env).ok(),
                self.cfg.gateway.timeout,
            )),
        };
        let client = EmbeddingClient::new(embedder);
        match &self.cfg.paths.cache_dir {
            Some(dir) => client.with_cache_dir(dir),
            None => client,
        }
    }

    fn gateway(&self) -> Gateway {
        let transport: Arc<dyn ChatTransport> = match self.cfg.generators.backend {
            Backend::Mock => Arc::new(QuestionWriter),
            Backend::Http => {
                let key = std::env::var(&self.cfg.gateway.api_key_env).ok();
                if key.is_none() {
                    log::warn!("{} is not set; sending requests without a key", self.cfg.gateway.api_key_env);
                }
                Arc::new(HttpTransport::new(&self.cfg.gateway.base_url, key, self.cfg.gateway.timeout))
            }
        };
        Gateway::new(self.cfg.gateway.clone(), transport)
    }

    fn template(&mut self, id: &str, builtin: PromptTemplate) -> Result<PromptTemplate, CliError> {
        if id == builtin.id {
            return Ok(builtin);
        }
        let path = Path::new(id);
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("template {id:?} is neither built in nor a readable file: {e}")))?;
        self.manifest.input(&format!("template:{id}"), path)?;
        Ok(PromptTemplate::new(id, text))
    }

    fn retrieval_config(&self) -> RetrievalConfig {
        RetrievalConfig {
            top_k: self.cfg.retrieval.top_k,
            mode: self.cfg.retrieval.mode,
            seed: Some(self.cfg.seed),
            embedding_model: Some(self.cfg.retrieval.embedding_model.clone()),
        }
    }

    fn check_cancel(&self) -> Result<(), CliError> {
        if self.cancel.load(Ordering::SeqCst) {
            Err(CliError::Interrupted)
        } else {
            Ok(())
        }
    }

    fn ingest(&mut self) -> Result<(), CliError> {
        let store = self.load_corpus()?;
        let path = self.out.join("corpus.jsonl");
        let mut w = BufWriter::new(File::create(&path)?);
        store.write_jsonl(&mut w)?;
        w.flush()?;
        self.manifest.output("corpus", &path)?;
        let mut s = serde_json::json!({
            "documents": store.len(),
            "documents_with_mesh": store.iter().filter(|d| !d.mesh_uis.is_empty()).count(),
        });
        if self.cfg.paths.mesh.is_some() {
            let ontology = self.load_ontology()?;
            let unknown: usize =
                store.iter().flat_map(|d| d.mesh_uis.iter()).filter(|ui| !ontology.contains(ui)).count();
            let path = self.out.join("mesh.jsonl");
            let mut w = BufWriter::new(File::create(&path)?);
            write_canonical(&ontology, &mut w)?;
            w.flush()?;
            self.manifest.output("mesh", &path)?;
            s["mesh_descriptors"] = ontology.len().into();
            s["orphan_warnings"] = ontology.warnings().len().into();
            s["unknown_annotations"] = unknown.into();
        }
        self.manifest.stats = s;
        Ok(())
    }

    fn index(&mut self) -> Result<(), CliError> {
        let store = self.load_corpus()?;
        let index = CorpusIndex::build(&store)?;
        let path = self.out.join("index.tfidf");
        let mut w = BufWriter::new(File::create(&path)?);
        index.write(&mut w)?;
        w.flush()?;
        self.manifest.output("index", &path)?;
        self.manifest.stats = serde_json::json!({
            "documents": index.doc_count(),
            "vocabulary": index.vocabulary_len(),
            "tokenizer": index.fingerprint(),
        });
        Ok(())
    }

    fn questions(&mut self) -> Result<(), CliError> {
        let store = self.load_corpus()?;
        let template = self.template(&self.cfg.templates.question.clone(), PromptTemplate::default_question())?;
        let gateway = self.gateway();
        let g = &self.cfg.generators;
        let mut jobs = Vec::new();
        for doc in store.iter() {
            for model in [&g.model_a, &g.model_b] {
                for variant in 0..g.candidates_per_model {
                    jobs.push((doc, model.as_str(), variant));
                }
            }
        }
        let cancel = self.cancel;
        let results = bounded_map(&jobs, gateway.config().max_in_flight, |(doc, model, variant)| {
            if cancel.load(Ordering::SeqCst) {
                return None;
            }
            Some(gateway.generate_question(doc, &template, model, *variant))
        });
        let mut candidates = Vec::new();
        let mut failures = 0usize;
        for r in results.into_iter().flatten() {
            match r {
                Ok(c) => candidates.push(c),
                Err(e) => {
                    log::warn!("question generation: {e}");
                    failures += 1;
                }
            }
        }
        let path = self.out.join("questions.jsonl");
        write_questions(&path, &candidates)?;
        self.manifest.output("questions", &path)?;
        self.manifest.stats = serde_json::json!({
            "documents": store.len(),
            "requests": jobs.len(),
            "candidates": candidates.len(),
            "failures": failures,
        });
        if !jobs.is_empty() && failures == jobs.len() {
            return Err(CliError::External(format!("all {failures} generation requests failed")));
        }
        Ok(())
    }

    fn prefs(&mut self) -> Result<(), CliError> {
        let store = self.load_corpus()?;
        let scorer_kind = self.cfg.scorer.kind;
        let mode = self.cfg.retrieval.mode;
        let ontology = match scorer_kind {
            ScorerKind::Mesh => Some(self.load_ontology()?),
            _ => None,
        };
        let index = match (scorer_kind, mode) {
            (ScorerKind::Tfidf, _) | (_, RetrievalMode::Tfidf) => Some(self.load_index(&store)?),
            _ => None,
        };
        let counts = AnnotationCounts::from_annotations(store.iter().map(|d| d.mesh_uis.iter().map(String::as_str)));
        let scorer: Box<dyn CollectionScorer> = match scorer_kind {
            ScorerKind::Mesh => Box::new(MeshCollectionScorer {
                scorer: HierarchyScorer::new(
                    ontology.as_ref().expect("loaded for mesh"),
                    crate::similarity::TermSimConfig { metric: self.cfg.scorer.metric },
                    Some(&counts),
                )?,
                aggregation: self.cfg.scorer.aggregation,
            }),
            ScorerKind::Tfidf => Box::new(TfidfCollectionScorer(index.as_ref().expect("loaded for tfidf"))),
            ScorerKind::Null => Box::new(NullScorer),
        };
        let embeddings = self.embeddings();
        let mut retriever = Retriever::new(&store, self.retrieval_config()).with_embeddings(&embeddings);
        if let Some(i) = &index {
            retriever = retriever.with_index(i);
        }
        let template = self.template(&self.cfg.templates.question.clone(), PromptTemplate::default_question())?;
        let gateway = self.gateway();
        let g = &self.cfg.generators;
        let builder = PairBuilder {
            store: &store,
            retriever: &retriever,
            scorer: scorer.as_ref(),
            gateway: &gateway,
            template: &template,
            generators: vec![g.model_a.clone(), g.model_b.clone()],
            candidates_per_model: g.candidates_per_model,
            query_mode: g.query_mode,
            tie_margin: self.cfg.scorer.tie_margin,
            cancel: Some(self.cancel),
        };
        let run = build_preference_pairs(&builder)?;
        self.manifest.scorer = Some(scorer_kind.to_string());
        self.manifest.retriever = Some(mode.to_string());
        let path = self.out.join("prefs.jsonl");
        write_pairs(&path, &run.pairs)?;
        self.manifest.output("prefs", &path)?;
        self.manifest.stats = stats(&run.stats);
        self.check_cancel()?;
        let s = &run.stats;
        if s.documents_processed > 0 && s.failures == s.documents_processed {
            let first = s.failure_reasons.values().next().cloned().unwrap_or_default();
            return Err(CliError::External(format!("every document failed; first failure: {first}")));
        }
        Ok(())
    }

    fn distill(&mut self) -> Result<(), CliError> {
        let store = self.load_corpus()?;
        let questions = match self.cfg.paths.questions.clone() {
            Some(path) => {
                let q = read_questions(&path)?;
                self.manifest.input("questions", &path)?;
                q
            }
            None => self.generate_for_distill(&store)?,
        };
        self.check_cancel()?;
        let index = match self.cfg.retrieval.mode {
            RetrievalMode::Tfidf => Some(self.load_index(&store)?),
            _ => None,
        };
        let embeddings = self.embeddings();
        let mut retriever = Retriever::new(&store, self.retrieval_config()).with_embeddings(&embeddings);
        if let Some(i) = &index {
            retriever = retriever.with_index(i);
        }
        let template = self.template(&self.cfg.templates.distill.clone(), PromptTemplate::default_distill())?;
        let (examples, s) = assemble_distilled(&questions, &store, &retriever, &template)?;
        self.manifest.retriever = Some(self.cfg.retrieval.mode.to_string());
        let path = self.out.join("distilled.jsonl");
        write_distilled(&path, &examples)?;
        self.manifest.output("distilled", &path)?;
        self.manifest.stats = stats(&s);
        if s.questions > 0 && s.failures == s.questions {
            return Err(CliError::External(format!("retrieval failed for all {} questions", s.failures)));
        }
        Ok(())
    }

    /// One question per document from model A, for `distill` without `--questions`.
    fn generate_for_distill(&mut self, store: &DocumentStore) -> Result<Vec<QuestionRecord>, CliError> {
        let template = self.template(&self.cfg.templates.question.clone(), PromptTemplate::default_question())?;
        let gateway = self.gateway();
        let model = self.cfg.generators.model_a.clone();
        let docs: Vec<_> = store.iter().collect();
        let cancel = self.cancel;
        let results = bounded_map(&docs, gateway.config().max_in_flight, |d| {
            if cancel.load(Ordering::SeqCst) {
                return None;
            }
            Some(gateway.generate_question(d, &template, &model, 0))
        });
        let mut out = Vec::new();
        let mut failed = 0;
        for r in results.into_iter().flatten() {
            match r {
                Ok(c) => out.push(QuestionRecord { question: c.text, source_pmid: c.source_pmid }),
                Err(e) => {
                    log::warn!("question generation: {e}");
                    failed += 1;
                }
            }
        }
        if !docs.is_empty() && failed == docs.len() {
            return Err(CliError::External(format!("all {failed} generation requests failed")));
        }
        Ok(out)
    }

    fn eval(&mut self) -> Result<(), CliError> {
        let bench_path = require(&self.cfg.paths.benchmark, "--benchmark")?.to_path_buf();
        let items = load_benchmark_file(&bench_path)?;
        self.manifest.input("benchmark", &bench_path)?;
        let model = self.cfg.eval.model.clone().unwrap_or_else(|| self.cfg.generators.model_a.clone());
        let ecfg =
            EvalConfig { setting: self.cfg.eval.setting, model: model.clone(), answer_parser: AnswerParser::TokenScan };
        let stubs;
        let gateway;
        let gateway_answers;
        let source: &dyn AnswerSource = match self.cfg.paths.answers.clone() {
            Some(path) => {
                stubs = load_stub_answers(&path)?;
                self.manifest.input("answers", &path)?;
                &stubs
            }
            None => {
                gateway = self.gateway();
                gateway_answers = GatewayAnswers { gateway: &gateway, model };
                &gateway_answers
            }
        };
        let mut run = evaluate(&items, &ecfg, source);
        if !self.cfg.eval.mesh_slices.is_empty() {
            let s = slice(&items, &run.results, &SliceSpec::MeshTerms(self.cfg.eval.mesh_slices.clone()))?;
            run.report.slices.extend(s);
        }
        if let Some(ranges) = &self.cfg.eval.year_ranges {
            let s = slice(&items, &run.results, &SliceSpec::parse_year_ranges(ranges)?)?;
            run.report.slices.extend(s);
        }
        let report_path = self.out.join("eval_report.json");
        let mut text = serde_json::to_string_pretty(&run.report).expect("report serializes");
        text.push('\n');
        std::fs::write(&report_path, text)?;
        let csv_path = self.out.join("eval_items.csv");
        run.write_csv(BufWriter::new(File::create(&csv_path)?))?;
        self.manifest.output("report", &report_path)?;
        self.manifest.output("items", &csv_path)?;
        self.manifest.stats = stats(&run.report);
        if self.cfg.paths.answers.is_none() && run.report.n > 0 && run.report.errors == run.report.n {
            return Err(CliError::External(format!("all {} answer requests failed", run.report.n)));
        }
        Ok(())
    }

    fn report(&mut self) -> Result<(), CliError> {
        let path = require(&self.cfg.paths.input, "--input")?.to_path_buf();
        let check = verify_preference_file(&path, self.cfg.scorer.tie_margin)?;
        self.manifest.input("prefs", &path)?;
        let pairs = read_pairs(&path)?;
        let mut wins = std::collections::BTreeMap::<String, usize>::new();
        let mut scorers = std::collections::BTreeSet::new();
        for p in &pairs {
            *wins.entry(p.generator_chosen.clone()).or_default() += 1;
            scorers.insert(p.scorer_kind.clone());
        }
        let mean_margin = if pairs.is_empty() {
            0.0
        } else {
            crate::util::stable_sum(pairs.iter().map(|p| p.margin()).collect()) / pairs.len() as f64
        };
        let summary = serde_json::json!({
            "records": check.records,
            "violations": check.violations,
            "invariant_holds": check.ok(),
            "tie_margin": self.cfg.scorer.tie_margin,
            "wins": wins,
            "scorer_kinds": scorers,
            "mean_margin": mean_margin,
        });
        let out_path = self.out.join("report.json");
        let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        text.push('\n');
        std::fs::write(&out_path, text)?;
        self.manifest.output("report", &out_path)?;
        self.manifest.stats = summary;
        if !check.ok() {
            return Err(CliError::Data(format!(
                "{} of {} records violate the margin",
                check.violations.len(),
                check.records
            )));
        }
        Ok(())
    }
}
