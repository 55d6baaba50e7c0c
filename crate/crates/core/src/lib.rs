//! Knowledge-hierarchy guided distillation of biomedical question datasets.
//!
//! Candidate questions generated from source documents are scored by how
//! well the documents they retrieve line up with the source in the MeSH
//! hierarchy. The better-aligned question of each pair becomes the
//! preferred sample; the retrieved contexts become pretraining text.

pub mod cli;
pub mod corpus;
pub mod distill;
pub mod eval;
pub mod llm;
pub mod mesh;
pub mod similarity;
pub mod util;
