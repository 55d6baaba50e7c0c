use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::BenchmarkItem;

/// Fixed answer instruction appended to every prompt.
pub const ANSWER_INSTRUCTION: &str = "Answer yes, no, or maybe.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceSetting {
    /// Contexts, then the question.
    #[default]
    ReasoningRequired,
    /// The question alone.
    QuestionOnly,
}

impl InferenceSetting {
    pub fn as_str(self) -> &'static str {
        match self {
            InferenceSetting::ReasoningRequired => "reasoning-required",
            InferenceSetting::QuestionOnly => "question-only",
        }
    }
}

impl fmt::Display for InferenceSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InferenceSetting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reasoning-required" => Ok(Self::ReasoningRequired),
            "question-only" => Ok(Self::QuestionOnly),
            other => Err(format!("unknown setting {other:?} (expected reasoning-required or question-only)")),
        }
    }
}

/// The reasoning-required prompt is a context section followed by exactly
/// the question-only prompt.
pub fn render_prompt(item: &BenchmarkItem, setting: InferenceSetting) -> String {
    let tail = format!("Question: {}\n{ANSWER_INSTRUCTION}\n", item.question);
    match setting {
        InferenceSetting::QuestionOnly => tail,
        InferenceSetting::ReasoningRequired => {
            format!("Context:\n{}\n\n{tail}", item.contexts.join("\n\n"))
        }
    }
}
