use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {template:?} references unbound placeholder {{{placeholder}}}")]
    Unbound { template: String, placeholder: String },
}

/// Prompt text with `{name}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub text: String,
}

pub const QUESTION_TEMPLATE: &str = include_str!("../../templates/question.txt");
pub const DISTILL_TEMPLATE: &str = include_str!("../../templates/distill.txt");

impl PromptTemplate {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self { id: id.into(), text: text.into() }
    }

    pub fn default_question() -> Self {
        Self::new("question-v1", QUESTION_TEMPLATE)
    }

    pub fn default_distill() -> Self {
        Self::new("distill-v1", DISTILL_TEMPLATE)
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for (_, name, _) in scan(&self.text) {
            if !out.iter().any(|n| n == name) {
                out.push(name.to_string());
            }
        }
        out
    }

    pub fn render(&self, bindings: &BTreeMap<&str, &str>) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.text.len());
        let mut last = 0;
        for (start, name, end) in scan(&self.text) {
            let value = bindings
                .get(name)
                .ok_or_else(|| TemplateError::Unbound { template: self.id.clone(), placeholder: name.to_string() })?;
            out.push_str(&self.text[last..start]);
            out.push_str(value);
            last = end;
        }
        out.push_str(&self.text[last..]);
        Ok(out)
    }
}

/// `(start, name, end)` of every `{identifier}` occurrence.
fn scan(text: &str) -> Vec<(usize, &str, usize)> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let rest = &text[i + 1..];
            let len = rest.bytes().take_while(|b| b.is_ascii_alphanumeric() || *b == b'_').count();
            if len > 0 && rest.as_bytes().get(len) == Some(&b'}') {
                out.push((i, &rest[..len], i + len + 2));
                i += len + 2;
                continue;
            }
        }
        i += 1;
    }
    out
}
