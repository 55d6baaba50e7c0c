mod common;

use std::fs::File;
use std::io::BufReader;
use std::sync::Arc;

use common::*;
use kailin_core::corpus::{ingest, CorpusIndex, DocumentStore, RetrievalConfig, RetrievalMode, Retriever};
use kailin_core::distill::{build_preference_pairs, PairBuilder, PairRun, QueryMode};
use kailin_core::llm::mock::{FnTransport, QuestionWriter};
use kailin_core::llm::{ChatTransport, Gateway, GatewayConfig, PromptTemplate};
use kailin_core::mesh::{
    load_mesh_file, parse_mesh, read_canonical, write_ascii_bin, write_canonical, MeshDescriptor, MeshFormat,
    MeshOntology, TreeNumber,
};
use kailin_core::similarity::{
    CollectionAggregation, CollectionScorer, HierarchyScorer, MeshCollectionScorer, NullScorer, TermSimConfig,
};
use proptest::prelude::*;

fn load_store(name: &str) -> DocumentStore {
    ingest(BufReader::new(File::open(fixture(name)).unwrap())).unwrap()
}

#[test]
fn mini_ontology_orphans_match_audited_list() {
    let o = load_mesh_file(&fixture("mesh_mini.bin")).unwrap();
    assert_eq!(o.len(), 63);
    assert_eq!(o.source(), Some("mesh_mini.bin"));
    let expected = std::fs::read_to_string(fixture("mesh_mini.orphans.tsv")).unwrap();
    let got: String =
        o.warnings().iter().map(|w| format!("{}\t{}\t{}\n", w.ui, w.tree_number, w.missing_parent)).collect();
    assert_eq!(got, expected);
    // the qualifier record is skipped
    assert!(!o.contains("Q000628"));
}

#[test]
fn xml_and_ascii_agree_on_shared_records() {
    let xml = load_mesh_file(&fixture("mesh_small.xml")).unwrap();
    let bin = load_mesh_file(&fixture("mesh_mini.bin")).unwrap();
    assert_eq!(xml.len(), 5);
    for d in xml.descriptors() {
        assert_eq!(Some(d), bin.get(&d.ui));
    }
}

#[test]
fn fixture_corpus_annotations_resolve() {
    let o = load_mesh_file(&fixture("mesh_mini.bin")).unwrap();
    let st = load_store("corpus_mini.jsonl");
    assert_eq!(st.len(), 50);
    for d in st.iter() {
        assert!(!d.mesh_uis.is_empty());
        for ui in &d.mesh_uis {
            assert!(o.contains(ui), "{} cites unknown {ui}", d.pmid);
        }
    }
}

fn arbitrary_ontology() -> impl Strategy<Value = MeshOntology> {
    any::<u64>().prop_map(|seed| random_ontology(&mut rng(seed), 25).0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ascii_then_canonical_round_trip(o in arbitrary_ontology()) {
        let mut bin = Vec::new();
        write_ascii_bin(&o, &mut bin).unwrap();
        let parsed = parse_mesh(bin.as_slice(), MeshFormat::AsciiBin).unwrap();
        let mut first = Vec::new();
        write_canonical(&parsed, &mut first).unwrap();
        let again = read_canonical(first.as_slice()).unwrap();
        let mut second = Vec::new();
        write_canonical(&again, &mut second).unwrap();
        prop_assert_eq!(&first, &second);
        let mut original = Vec::new();
        write_canonical(&o, &mut original).unwrap();
        prop_assert_eq!(original, first);
        prop_assert_eq!(parsed.warnings(), o.warnings());
    }
}

fn three_doc_ontology() -> MeshOntology {
    let d = |ui: &str, t: &str| MeshDescriptor {
        ui: ui.into(),
        name: ui.into(),
        tree_numbers: vec![TreeNumber::parse(t).unwrap()],
    };
    MeshOntology::from_descriptors([
        d("D009203", "C14.280.647.500"),
        d("D006333", "C14.280.434"),
        d("D003924", "C18.452.394.750.149"),
        d("D008687", "D02.078.370.141.450"),
    ])
    .unwrap()
}

fn fixed_questions() -> Arc<dyn ChatTransport> {
    Arc::new(FnTransport(|req: &kailin_core::llm::ChatRequest| {
        Ok(match req.model.as_str() {
            "gen-a" => "heart attack outcomes".to_string(),
            _ => "metformin glucose".to_string(),
        })
    }))
}

fn run_three(generators: [&str; 2]) -> PairRun {
    let st = load_store("corpus_three.jsonl");
    let index = CorpusIndex::build(&st).unwrap();
    let o = three_doc_ontology();
    let cfg = RetrievalConfig { top_k: 1, mode: RetrievalMode::Tfidf, seed: None, embedding_model: None };
    let retriever = Retriever::new(&st, cfg).with_index(&index);
    let scorer = MeshCollectionScorer {
        scorer: HierarchyScorer::new(&o, TermSimConfig::default(), None).unwrap(),
        aggregation: CollectionAggregation::Mean,
    };
    let gateway = Gateway::new(GatewayConfig::default(), fixed_questions());
    let template = PromptTemplate::default_question();
    let builder = PairBuilder {
        store: &st,
        retriever: &retriever,
        scorer: &scorer,
        gateway: &gateway,
        template: &template,
        generators: generators.iter().map(|s| s.to_string()).collect(),
        candidates_per_model: 1,
        query_mode: QueryMode::Question,
        tie_margin: 0.0,
        cancel: None,
    };
    build_preference_pairs(&builder).unwrap()
}

/// Traced by hand: "heart attack outcomes" retrieves doc 3 (MI + heart
/// failure), "metformin glucose" retrieves doc 2 (type 2 diabetes +
/// metformin). Against {MI}: doc 3 scores 0.5·(1 + (1 + 4/7)/2) = 25/28,
/// doc 2 scores 0.
#[test]
fn hand_traced_three_document_loop() {
    let run = run_three(["gen-a", "gen-b"]);
    assert_eq!(run.stats.documents_processed, 3);
    assert_eq!(run.stats.pairs_emitted, 3);
    let p: Vec<_> = run.pairs.iter().map(|p| (p.source_pmid.as_str(), p.generator_chosen.as_str())).collect();
    assert_eq!(p, [("1", "gen-a"), ("2", "gen-b"), ("3", "gen-a")]);
    assert!((run.pairs[0].score_chosen - 25.0 / 28.0).abs() < 1e-15);
    assert_eq!(run.pairs[0].score_rejected, 0.0);
    assert_eq!(run.pairs[0].chosen, "heart attack outcomes");
    assert_eq!(run.pairs[1].score_chosen, 1.0);
    assert_eq!(run.pairs[2].score_chosen, 1.0);
    assert_eq!(run.stats.wins["gen-a"], 2);
    assert_eq!(run.stats.wins["gen-b"], 1);
}

#[test]
fn swapping_generators_keeps_text_pairs() {
    let a = run_three(["gen-a", "gen-b"]);
    let b = run_three(["gen-b", "gen-a"]);
    let texts = |r: &PairRun| r.pairs.iter().map(|p| (p.chosen.clone(), p.rejected.clone())).collect::<Vec<_>>();
    assert_eq!(texts(&a), texts(&b));
}

#[test]
fn null_scorer_emits_nothing() {
    let st = load_store("corpus_mini.jsonl");
    let cfg = RetrievalConfig { top_k: 4, mode: RetrievalMode::Random, seed: Some(42), embedding_model: None };
    let retriever = Retriever::new(&st, cfg);
    let gateway = Gateway::new(GatewayConfig::default(), Arc::new(QuestionWriter));
    let template = PromptTemplate::default_question();
    let scorer: &dyn CollectionScorer = &NullScorer;
    let builder = PairBuilder {
        store: &st,
        retriever: &retriever,
        scorer,
        gateway: &gateway,
        template: &template,
        generators: vec!["m1".into(), "m2".into()],
        candidates_per_model: 2,
        query_mode: QueryMode::QuestionWithSource,
        tie_margin: 0.0,
        cancel: None,
    };
    let run = build_preference_pairs(&builder).unwrap();
    assert!(run.pairs.is_empty());
    assert_eq!(run.stats.pairs_skipped_tie, 50);
    assert_eq!(run.stats.failures, 0);
}
