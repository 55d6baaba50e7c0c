use std::collections::{BTreeMap, HashMap};
use std::ops::Bound;

use serde::{Deserialize, Serialize};

use super::{MeshError, TreeNumber};

/// One MeSH heading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshDescriptor {
    pub ui: String,
    pub name: String,
    #[serde(default)]
    pub tree_numbers: Vec<TreeNumber>,
}

impl MeshDescriptor {
    pub fn new(ui: impl Into<String>, name: impl Into<String>, tree_numbers: Vec<TreeNumber>) -> Self {
        Self { ui: ui.into(), name: name.into(), tree_numbers }
    }

    pub fn has_position(&self) -> bool {
        !self.tree_numbers.is_empty()
    }
}

/// A tree number whose parent prefix is not held by any descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OntologyWarning {
    pub ui: String,
    pub tree_number: TreeNumber,
    pub missing_parent: TreeNumber,
}

/// Immutable MeSH hierarchy.
#[derive(Debug, Clone, Default)]
pub struct MeshOntology {
    descriptors: BTreeMap<String, MeshDescriptor>,
    tree_index: BTreeMap<String, String>,
    name_index: HashMap<String, String>,
    warnings: Vec<OntologyWarning>,
    source: Option<String>,
}

impl MeshOntology {
    /// Builds the ontology, deduplicating tree numbers per descriptor.
    pub fn from_descriptors(descriptors: impl IntoIterator<Item = MeshDescriptor>) -> Result<Self, MeshError> {
        let mut out = MeshOntology::default();
        for (i, mut d) in descriptors.into_iter().enumerate() {
            if d.ui.trim().is_empty() {
                return Err(MeshError::MalformedRecord { record: i + 1, reason: "empty UI".into() });
            }
            if out.descriptors.contains_key(&d.ui) {
                return Err(MeshError::DuplicateUi(d.ui));
            }
            let mut seen = std::collections::HashSet::new();
            d.tree_numbers.retain(|t| seen.insert(t.clone()));
            for t in &d.tree_numbers {
                if let Some(first) = out.tree_index.insert(t.to_string(), d.ui.clone()) {
                    return Err(MeshError::DuplicateTreeNumber { tree: t.to_string(), first, second: d.ui.clone() });
                }
            }
            out.name_index.entry(d.name.to_lowercase()).or_insert_with(|| d.ui.clone());
            out.descriptors.insert(d.ui.clone(), d);
        }
        out.warnings = out.find_orphans();
        Ok(out)
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    /// Name of the file the ontology was read from, if known.
    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    fn find_orphans(&self) -> Vec<OntologyWarning> {
        let mut out = Vec::new();
        for d in self.descriptors.values() {
            for t in &d.tree_numbers {
                if let Some(parent) = t.parent() {
                    if !self.tree_index.contains_key(parent.as_str()) {
                        out.push(OntologyWarning { ui: d.ui.clone(), tree_number: t.clone(), missing_parent: parent });
                    }
                }
            }
        }
        out.sort_by(|a, b| a.tree_number.cmp(&b.tree_number));
        out
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn get(&self, ui: &str) -> Option<&MeshDescriptor> {
        self.descriptors.get(ui)
    }

    pub fn require(&self, ui: &str) -> Result<&MeshDescriptor, MeshError> {
        self.get(ui).ok_or_else(|| MeshError::UnknownUi(ui.to_string()))
    }

    pub fn contains(&self, ui: &str) -> bool {
        self.descriptors.contains_key(ui)
    }

    /// Descriptors ordered by UI.
    pub fn descriptors(&self) -> impl Iterator<Item = &MeshDescriptor> {
        self.descriptors.values()
    }

    pub fn tree_index_len(&self) -> usize {
        self.tree_index.len()
    }

    pub fn ui_for_tree(&self, tree: &TreeNumber) -> Option<&str> {
        self.tree_index.get(tree.as_str()).map(String::as_str)
    }

    /// Case-insensitive heading lookup.
    pub fn ui_for_name(&self, name: &str) -> Option<&str> {
        self.name_index.get(&name.to_lowercase()).map(String::as_str)
    }

    pub fn warnings(&self) -> &[OntologyWarning] {
        &self.warnings
    }

    /// Every indexed tree number strictly below `tree`, with its owner.
    pub fn descendants<'a>(&'a self, tree: &TreeNumber) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        let prefix = format!("{}.", tree.as_str());
        self.tree_index
            .range::<String, _>((Bound::Excluded(prefix.clone()), Bound::Unbounded))
            .take_while(move |(k, _)| k.starts_with(&prefix))
            .map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Owner of the deepest indexed tree number that is `tree` or one of its
    /// ancestors. Used when a common prefix falls on a gap in the hierarchy.
    pub fn nearest_indexed(&self, tree: &TreeNumber) -> Option<&str> {
        if let Some(ui) = self.ui_for_tree(tree) {
            return Some(ui);
        }
        tree.ancestors().iter().find_map(|a| self.ui_for_tree(a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tn(s: &str) -> TreeNumber {
        TreeNumber::parse(s).unwrap()
    }

    #[test]
    fn duplicate_ui_rejected() {
        let err = MeshOntology::from_descriptors([
            MeshDescriptor::new("D000001", "A", vec![]),
            MeshDescriptor::new("D000001", "B", vec![]),
        ])
        .unwrap_err();
        assert!(matches!(err, MeshError::DuplicateUi(ui) if ui == "D000001"));
    }

    #[test]
    fn shared_tree_number_rejected() {
        let err = MeshOntology::from_descriptors([
            MeshDescriptor::new("D1", "A", vec![tn("C01")]),
            MeshDescriptor::new("D2", "B", vec![tn("C01")]),
        ])
        .unwrap_err();
        assert!(matches!(err, MeshError::DuplicateTreeNumber { .. }));
    }

    #[test]
    fn orphans_are_warnings() {
        let o = MeshOntology::from_descriptors([
            MeshDescriptor::new("D1", "Infections", vec![tn("C01")]),
            MeshDescriptor::new("D2", "Bacterial Infections", vec![tn("C01.252")]),
            MeshDescriptor::new("D3", "Gram-Negative", vec![tn("C01.252.400.310")]),
            MeshDescriptor::new("D4", "Female", vec![]),
        ])
        .unwrap();
        assert_eq!(o.len(), 4);
        assert_eq!(o.warnings().len(), 1);
        assert_eq!(o.warnings()[0].missing_parent.as_str(), "C01.252.400");
        assert_eq!(o.nearest_indexed(&tn("C01.252.400")), Some("D2"));
        assert_eq!(o.ui_for_name("bacterial INFECTIONS"), Some("D2"));
        let desc: Vec<_> = o.descendants(&tn("C01")).map(|(t, _)| t).collect();
        assert_eq!(desc, ["C01.252", "C01.252.400.310"]);
    }

    #[test]
    fn tree_duplicates_collapsed() {
        let o = MeshOntology::from_descriptors([MeshDescriptor::new("D1", "A", vec![tn("C01"), tn("C01")])]).unwrap();
        assert_eq!(o.get("D1").unwrap().tree_numbers.len(), 1);
    }
}
