//! The selection loop: generate candidate questions per source document,
//! retrieve context for each candidate, score that context against the
//! source's hierarchy position, and keep the better-aligned question as the
//! preferred one. Also assembles question-plus-context pretraining text.

mod assemble;
mod io;
mod pairs;

pub use assemble::{assemble_distilled, AssembleStats, DistilledExample, CONTEXT_DELIMITER};
pub use io::{
    read_distilled, read_pairs, read_questions, verify_preference_file, write_distilled, write_pairs, write_questions,
    PreferenceCheck, QuestionRecord,
};
pub use pairs::{build_preference_pairs, DistillStats, PairBuilder, PairRun, PreferencePair, QueryMode};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
