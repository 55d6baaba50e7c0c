//! MeSH tree numbers: dot-separated paths such as `C01.252.400`.
//!
//! The first segment names a category (a letter followed by alphanumerics),
//! later segments are plain alphanumerics. The tree-number forest has no
//! shared super-root, so two paths with different first segments have no
//! common ancestor.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MeshError;

/// A validated MeSH tree number.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TreeNumber(String);

impl TreeNumber {
    pub fn parse(raw: &str) -> Result<Self, MeshError> {
        if is_valid(raw) {
            Ok(Self(raw.to_string()))
        } else {
            Err(MeshError::InvalidTreeNumber(raw.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0.split('.')
    }

    /// Number of segments; always at least 1.
    pub fn depth(&self) -> usize {
        self.0.bytes().filter(|&b| b == b'.').count() + 1
    }

    pub fn parent(&self) -> Option<TreeNumber> {
        self.0.rfind('.').map(|i| Self(self.0[..i].to_string()))
    }

    /// Strict prefixes at segment boundaries, nearest first.
    pub fn ancestors(&self) -> Vec<TreeNumber> {
        let mut out = Vec::with_capacity(self.depth() - 1);
        let mut cur = self.parent();
        while let Some(p) = cur {
            cur = p.parent();
            out.push(p);
        }
        out
    }

    /// Prefix consisting of the first `depth` segments.
    pub fn prefix(&self, depth: usize) -> Option<TreeNumber> {
        if depth == 0 || depth > self.depth() {
            return None;
        }
        let end = self.0.match_indices('.').nth(depth - 1).map(|(i, _)| i).unwrap_or(self.0.len());
        Some(Self(self.0[..end].to_string()))
    }

    /// Length of the longest common segment prefix.
    pub fn lcp_depth(&self, other: &TreeNumber) -> usize {
        self.segments().zip(other.segments()).take_while(|(a, b)| a == b).count()
    }

    /// True when `self` lies strictly below `other`.
    pub fn is_descendant_of(&self, other: &TreeNumber) -> bool {
        self.0.len() > other.0.len() && self.0.starts_with(other.as_str()) && self.0.as_bytes()[other.0.len()] == b'.'
    }
}

fn is_valid(raw: &str) -> bool {
    let mut segments = raw.split('.');
    let Some(first) = segments.next() else {
        return false;
    };
    let mut chars = first.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    if !chars.all(|c| c.is_ascii_alphanumeric()) {
        return false;
    }
    segments.all(|s| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric()))
}

impl FromStr for TreeNumber {
    type Err = MeshError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl TryFrom<String> for TreeNumber {
    type Error = MeshError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::parse(&s)
    }
}

impl From<TreeNumber> for String {
    fn from(t: TreeNumber) -> String {
        t.0
    }
}

impl fmt::Display for TreeNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Segment count of a raw tree number.
pub fn depth(raw: &str) -> Result<usize, MeshError> {
    Ok(TreeNumber::parse(raw)?.depth())
}

pub fn ancestors(raw: &str) -> Result<Vec<TreeNumber>, MeshError> {
    Ok(TreeNumber::parse(raw)?.ancestors())
}

pub fn lcp_depth(a: &str, b: &str) -> Result<usize, MeshError> {
    Ok(TreeNumber::parse(a)?.lcp_depth(&TreeNumber::parse(b)?))
}
