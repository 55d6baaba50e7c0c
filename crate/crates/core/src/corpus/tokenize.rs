//! Lowercase, split on anything that is not alphanumeric, drop tokens
//! shorter than two characters. No stemming, no stop words.

use sha2::{Digest, Sha256};

pub const MIN_TOKEN_CHARS: usize = 2;

const DESCRIPTION: &str = "tokenizer/v1;lowercase;split=non-alphanumeric;min-chars=2;stem=none;stopwords=none";

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= MIN_TOKEN_CHARS)
        .map(str::to_string)
        .collect()
}

/// Identifies the tokenizer configuration; persisted indexes carry it.
pub fn fingerprint() -> String {
    hex::encode(Sha256::digest(DESCRIPTION.as_bytes()))[..16].to_string()
}
