//! PubMedQA-style evaluation: benchmark loading, prompts for the two
//! inference settings, answer parsing, accuracy and slicing.

mod answer;
mod benchmark;
mod prompt;
mod report;

pub use answer::parse_answer;
pub use benchmark::{load_benchmark, load_benchmark_file, BenchmarkItem, Label};
pub use prompt::{render_prompt, InferenceSetting, ANSWER_INSTRUCTION};
pub use report::{
    evaluate, load_stub_answers, slice, AnswerParser, AnswerSource, EvalConfig, EvalReport, EvalRun, GatewayAnswers,
    ItemResult, SliceSpec, SliceStats, StubAnswers,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("malformed benchmark entry {id:?}: {reason}")]
    MalformedBenchmark { id: String, reason: String },
    #[error("year ranges {a} and {b} overlap")]
    OverlappingYearRanges { a: String, b: String },
    #[error("invalid year range {0}")]
    InvalidYearRange(String),
    #[error("stub answers line {line}: {reason}")]
    MalformedStub { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
