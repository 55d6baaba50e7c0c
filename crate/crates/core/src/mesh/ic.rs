use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{MeshError, MeshOntology};

/// Per-descriptor annotation frequencies gathered from a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationCounts {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl AnnotationCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, ui: &str, n: u64) {
        *self.counts.entry(ui.to_string()).or_default() += n;
        self.total += n;
    }

    /// Counts one annotation per listed UI per document.
    pub fn from_annotations<'a, I, J>(docs: I) -> Self
    where
        I: IntoIterator<Item = J>,
        J: IntoIterator<Item = &'a str>,
    {
        let mut out = Self::new();
        for doc in docs {
            for ui in doc {
                out.add(ui, 1);
            }
        }
        out
    }

    pub fn get(&self, ui: &str) -> u64 {
        self.counts.get(ui).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

impl FromIterator<(String, u64)> for AnnotationCounts {
    fn from_iter<T: IntoIterator<Item = (String, u64)>>(iter: T) -> Self {
        let mut out = Self::new();
        for (ui, n) in iter {
            out.add(&ui, n);
        }
        out
    }
}

/// Smoothed information content for every descriptor:
/// `IC(u) = -ln((subtree(u) + 1) / (total + 1))`.
#[derive(Debug, Clone)]
pub struct InformationContent {
    ic: HashMap<String, f64>,
    max_ic: f64,
}

impl InformationContent {
    pub fn new(ontology: &MeshOntology, counts: &AnnotationCounts) -> Self {
        let denom = counts.total() as f64 + 1.0;
        let mut ic = HashMap::with_capacity(ontology.len());
        let mut max_ic = 0.0_f64;
        for d in ontology.descriptors() {
            let subtree = subtree_count(ontology, counts, &d.ui);
            let value = -((subtree as f64 + 1.0) / denom).ln();
            // subtree ≤ total, but ln can round a hair below zero
            let value = value.max(0.0);
            if d.has_position() {
                max_ic = max_ic.max(value);
            }
            ic.insert(d.ui.clone(), value);
        }
        Self { ic, max_ic }
    }

    pub fn get(&self, ui: &str) -> Result<f64, MeshError> {
        self.ic.get(ui).copied().ok_or_else(|| MeshError::UnknownUi(ui.to_string()))
    }

    /// Largest IC among descriptors that have a hierarchy position.
    pub fn max_ic(&self) -> f64 {
        self.max_ic
    }
}

/// Annotation count of `ui` plus every distinct descriptor below any of its
/// tree numbers.
fn subtree_count(ontology: &MeshOntology, counts: &AnnotationCounts, ui: &str) -> u64 {
    let mut members: BTreeSet<&str> = BTreeSet::new();
    members.insert(ui);
    if let Some(d) = ontology.get(ui) {
        for t in &d.tree_numbers {
            members.extend(ontology.descendants(t).map(|(_, owner)| owner));
        }
    }
    members.into_iter().map(|m| counts.get(m)).sum()
}

/// Information content of one descriptor.
pub fn term_ic(ui: &str, ontology: &MeshOntology, counts: &AnnotationCounts) -> Result<f64, MeshError> {
    ontology.require(ui)?;
    let denom = counts.total() as f64 + 1.0;
    let subtree = subtree_count(ontology, counts, ui) as f64;
    Ok((-((subtree + 1.0) / denom).ln()).max(0.0))
}
