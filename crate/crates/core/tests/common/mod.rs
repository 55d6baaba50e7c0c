//! Shared fixtures and brute-force reference implementations.
#![allow(dead_code)]

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kailin_core::corpus::{Document, DocumentStore};
use kailin_core::mesh::{MeshDescriptor, MeshOntology, TreeNumber};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn kailin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kailin"))
        .args(args)
        .env_remove("KAILIN_BASE_URL")
        .env_remove("KAILIN_API_KEY")
        .output()
        .expect("binary runs")
}

pub fn kailin_in(out: &Path, args: &[&str]) -> Output {
    let mut all: Vec<&str> = args.to_vec();
    let out = out.to_str().unwrap().to_string();
    all.push("--out");
    all.push(&out);
    kailin(&all)
}

pub fn doc(pmid: &str, title: &str, abstract_text: &str, mesh: &[&str]) -> Document {
    Document {
        pmid: pmid.into(),
        title: title.into(),
        abstract_text: abstract_text.into(),
        mesh_uis: mesh.iter().map(|s| s.to_string()).collect(),
        pub_year: None,
    }
}

// ---------------------------------------------------------------------------
// Ontology similarity oracle. Works on plain strings, not on the crate's
// tree-number or index types.

pub struct OracleOntology {
    pub trees: BTreeMap<String, Vec<String>>,
    pub counts: BTreeMap<String, u64>,
    ic_cache: RefCell<HashMap<String, f64>>,
    max_ic_cache: Cell<Option<f64>>,
}

fn segs(t: &str) -> Vec<&str> {
    t.split('.').collect()
}

fn lcp(a: &str, b: &str) -> usize {
    segs(a).iter().zip(segs(b).iter()).take_while(|(x, y)| x == y).count()
}

impl OracleOntology {
    fn owner_of(&self, tree: &str) -> Option<&str> {
        self.trees.iter().find(|(_, ts)| ts.iter().any(|t| t == tree)).map(|(u, _)| u.as_str())
    }

    fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn new(trees: BTreeMap<String, Vec<String>>, counts: BTreeMap<String, u64>) -> Self {
        Self { trees, counts, ic_cache: RefCell::default(), max_ic_cache: Cell::new(None) }
    }

    /// Smoothed IC from a full scan: the descriptor plus every descriptor
    /// with a tree number strictly below one of its own.
    pub fn ic(&self, ui: &str) -> f64 {
        if let Some(v) = self.ic_cache.borrow().get(ui) {
            return *v;
        }
        let prefixes: Vec<String> = self.trees[ui].iter().map(|m| format!("{m}.")).collect();
        let mut members = BTreeSet::new();
        members.insert(ui);
        for (other, ts) in &self.trees {
            if ts.iter().any(|t| prefixes.iter().any(|p| t.starts_with(p.as_str()))) {
                members.insert(other.as_str());
            }
        }
        let sub: u64 = members.iter().map(|m| self.counts.get(*m).copied().unwrap_or(0)).sum();
        let v = (-((sub as f64 + 1.0) / (self.total() as f64 + 1.0)).ln()).max(0.0);
        self.ic_cache.borrow_mut().insert(ui.to_string(), v);
        v
    }

    pub fn max_ic(&self) -> f64 {
        if let Some(v) = self.max_ic_cache.get() {
            return v;
        }
        let v = self.trees.iter().filter(|(_, ts)| !ts.is_empty()).map(|(u, _)| self.ic(u)).fold(0.0, f64::max);
        self.max_ic_cache.set(Some(v));
        v
    }

    /// IC of the closest indexed ancestor-or-self of the shared prefix.
    fn lca_ic(&self, a: &str, b: &str) -> f64 {
        let n = lcp(a, b);
        let s = segs(a);
        for len in (1..=n).rev() {
            if let Some(u) = self.owner_of(&s[..len].join(".")) {
                return self.ic(u);
            }
        }
        0.0
    }

    pub fn term(&self, metric: &str, a: &str, b: &str) -> f64 {
        let (ta, tb) = (&self.trees[a], &self.trees[b]);
        if ta.is_empty() || tb.is_empty() {
            return 0.0;
        }
        if a == b && metric != "resnik-normalized" {
            return 1.0;
        }
        let mut best = 0.0_f64;
        for x in ta {
            for y in tb {
                let v = match metric {
                    "wu-palmer" => 2.0 * lcp(x, y) as f64 / (segs(x).len() + segs(y).len()) as f64,
                    "lin" => {
                        let d = self.ic(a) + self.ic(b);
                        if d == 0.0 {
                            0.0
                        } else {
                            (2.0 * self.lca_ic(x, y) / d).min(1.0)
                        }
                    }
                    "resnik-normalized" => {
                        let m = self.max_ic();
                        if m == 0.0 {
                            0.0
                        } else {
                            (self.lca_ic(x, y) / m).min(1.0)
                        }
                    }
                    other => panic!("metric {other}"),
                };
                if v > best {
                    best = v;
                }
            }
        }
        best
    }

    pub fn set(&self, metric: &str, a: &[String], b: &[String]) -> f64 {
        if a.is_empty() || b.is_empty() {
            return 0.0;
        }
        let mut left = 0.0;
        for x in a {
            let mut m = 0.0_f64;
            for y in b {
                m = m.max(self.term(metric, x, y));
            }
            left += m;
        }
        let mut right = 0.0;
        for y in b {
            let mut m = 0.0_f64;
            for x in a {
                m = m.max(self.term(metric, x, y));
            }
            right += m;
        }
        0.5 * (left / a.len() as f64 + right / b.len() as f64)
    }
}

/// Random ontology with at most `max_desc` descriptors and at most four tree
/// numbers each. Most positions hang under existing ones; a few skip a level
/// so some ancestors are not indexed.
pub fn random_ontology(rng: &mut ChaCha8Rng, max_desc: usize) -> (MeshOntology, OracleOntology) {
    let n = rng.random_range(1..=max_desc);
    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut pool: Vec<String> = Vec::new();
    let mut trees = BTreeMap::new();
    let mut descriptors = Vec::new();
    for i in 0..n {
        let ui = format!("D{:06}", i);
        let k = rng.random_range(0..=4usize);
        let mut ts = Vec::new();
        for _ in 0..k {
            let t = loop {
                let candidate = if pool.is_empty() || rng.random_bool(0.15) {
                    format!("{}{:02}", ['A', 'B', 'C', 'D'][rng.random_range(0..4)], rng.random_range(1..4))
                } else {
                    let parent = &pool[rng.random_range(0..pool.len())];
                    if rng.random_bool(0.1) {
                        format!("{parent}.{:03}.{:03}", rng.random_range(0..5), rng.random_range(0..5))
                    } else {
                        format!("{parent}.{:03}", rng.random_range(0..6))
                    }
                };
                if !used.contains(&candidate) {
                    break candidate;
                }
            };
            used.insert(t.clone());
            pool.push(t.clone());
            ts.push(t);
        }
        trees.insert(ui.clone(), ts.clone());
        descriptors.push(MeshDescriptor {
            ui,
            name: format!("Term {i}"),
            tree_numbers: ts.iter().map(|t| TreeNumber::parse(t).unwrap()).collect(),
        });
    }
    let mut counts = BTreeMap::new();
    for ui in trees.keys() {
        if rng.random_bool(0.6) {
            counts.insert(ui.clone(), rng.random_range(1..20u64));
        }
    }
    let ontology = MeshOntology::from_descriptors(descriptors).expect("generated ontology is valid");
    (ontology, OracleOntology::new(trees, counts))
}

pub fn random_set(rng: &mut ChaCha8Rng, uis: &[String]) -> Vec<String> {
    let n = rng.random_range(0..=10usize.min(uis.len()));
    let mut out: Vec<String> = (0..n).map(|_| uis[rng.random_range(0..uis.len())].clone()).collect();
    out.sort();
    out.dedup();
    out
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// TF-IDF retrieval oracle: dense vectors over the full vocabulary.

pub fn oracle_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            cur.push(c);
        } else {
            if cur.chars().count() >= 2 {
                out.push(cur.clone());
            }
            cur.clear();
        }
    }
    if cur.chars().count() >= 2 {
        out.push(cur);
    }
    out
}

fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

pub struct DenseOracle {
    pub vocab: Vec<String>,
    pub idf: Vec<f64>,
    pub docs: Vec<(String, Vec<f64>)>,
}

impl DenseOracle {
    pub fn new(docs: &[Document]) -> Self {
        let toks: Vec<(String, Vec<String>)> = docs
            .iter()
            .map(|d| (d.pmid.clone(), oracle_tokens(&format!("{}\n{}", d.title, d.abstract_text))))
            .collect();
        let vocab: Vec<String> =
            toks.iter().flat_map(|(_, t)| t.iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect();
        let n = docs.len() as f64;
        let idf: Vec<f64> = vocab
            .iter()
            .map(|v| {
                let df = toks.iter().filter(|(_, t)| t.contains(v)).count() as f64;
                ((n + 1.0) / (df + 1.0)).ln() + 1.0
            })
            .collect();
        let mut out = DenseOracle { vocab, idf, docs: Vec::new() };
        out.docs = toks.iter().map(|(p, t)| (p.clone(), out.vector(t))).collect();
        out.docs.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub fn vector(&self, tokens: &[String]) -> Vec<f64> {
        self.vocab
            .iter()
            .zip(&self.idf)
            .map(|(v, idf)| tokens.iter().filter(|t| *t == v).count() as f64 * idf)
            .collect()
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let na = sorted_sum(a.iter().map(|x| x * x).collect()).sqrt();
        let nb = sorted_sum(b.iter().map(|x| x * x).collect()).sqrt();
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        sorted_sum(a.iter().zip(b).map(|(x, y)| x * y).filter(|p| *p != 0.0).collect()) / (na * nb)
    }

    /// Every document scored, best first, pmid ascending on ties; empty when
    /// the query has no in-vocabulary token.
    pub fn rank(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        let q = self.vector(&oracle_tokens(query));
        if q.iter().all(|x| *x == 0.0) {
            return Vec::new();
        }
        let mut all: Vec<(String, f64)> = self.docs.iter().map(|(p, v)| (p.clone(), Self::cosine(&q, v))).collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    pub fn collection(&self, source: &str, retrieved: &[&str]) -> f64 {
        let unit = |v: &[f64]| {
            let n = sorted_sum(v.iter().map(|x| x * x).collect()).sqrt();
            if n == 0.0 {
                vec![0.0; v.len()]
            } else {
                v.iter().map(|x| x / n).collect::<Vec<_>>()
            }
        };
        let get = |p: &str| self.docs.iter().find(|(q, _)| q == p).map(|(_, v)| v.clone()).unwrap();
        let src = get(source);
        let mut centroid = vec![0.0; self.vocab.len()];
        for r in retrieved {
            for (c, x) in centroid.iter_mut().zip(unit(&get(r))) {
                *c += x / retrieved.len() as f64;
            }
        }
        Self::cosine(&src, &centroid).clamp(0.0, 1.0)
    }
}

pub const WORDS: [&str; 50] = [
    "enzyme",
    "activity",
    "dimer",
    "protein",
    "fold",
    "kinase",
    "receptor",
    "ligand",
    "binding",
    "assay",
    "cell",
    "tumor",
    "gene",
    "expression",
    "mutation",
    "pathway",
    "signal",
    "membrane",
    "channel",
    "ion",
    "insulin",
    "glucose",
    "liver",
    "lung",
    "heart",
    "renal",
    "therapy",
    "dose",
    "trial",
    "cohort",
    "risk",
    "survival",
    "imaging",
    "scan",
    "marker",
    "serum",
    "plasma",
    "antibody",
    "antigen",
    "virus",
    "bacteria",
    "infection",
    "vaccine",
    "immune",
    "response",
    "chronic",
    "acute",
    "outcome",
    "mortality",
    "biopsy",
];

/// Random corpus with up to `max_docs` documents over up to 50 terms; a
/// few documents are exact copies of earlier ones so ties occur.
pub fn random_corpus(rng: &mut ChaCha8Rng, max_docs: usize) -> Vec<Document> {
    let n = rng.random_range(1..=max_docs);
    let vocab = rng.random_range(1..=50usize);
    let mut docs: Vec<Document> = Vec::new();
    for i in 0..n {
        let words = if i > 0 && rng.random_bool(0.1) {
            docs[rng.random_range(0..docs.len())].title.clone()
        } else {
            let len = rng.random_range(0..12usize);
            (0..len).map(|_| WORDS[rng.random_range(0..vocab)]).collect::<Vec<_>>().join(" ")
        };
        docs.push(Document {
            pmid: format!("P{:03}", (i * 37) % 101),
            title: words,
            abstract_text: String::new(),
            mesh_uis: Vec::new(),
            pub_year: None,
        });
    }
    docs
}

pub fn store(docs: &[Document]) -> DocumentStore {
    DocumentStore::from_documents(docs.iter().cloned()).unwrap()
}
