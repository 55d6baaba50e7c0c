//! MeSH descriptor vocabulary: parsing, the tree-number hierarchy and
//! information content.

mod ic;
mod ontology;
mod parse;
pub mod tree;

pub use ic::{term_ic, AnnotationCounts, InformationContent};
pub use ontology::{MeshDescriptor, MeshOntology, OntologyWarning};
pub use parse::{load_mesh_file, parse_mesh, read_canonical, write_ascii_bin, write_canonical, MeshFormat};
pub use tree::TreeNumber;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid tree number {0:?}")]
    InvalidTreeNumber(String),
    #[error("malformed record #{record}: {reason}")]
    MalformedRecord { record: usize, reason: String },
    #[error("duplicate descriptor UI {0}")]
    DuplicateUi(String),
    #[error("tree number {tree} claimed by both {first} and {second}")]
    DuplicateTreeNumber { tree: String, first: String, second: String },
    #[error("unknown MeSH file format")]
    UnknownFormat,
    #[error("unknown descriptor UI {0}")]
    UnknownUi(String),
    #[error("xml error: {0}")]
    Xml(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
