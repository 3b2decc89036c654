use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Checkpoint;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SelectorError {
    #[error("selector pattern at position {0} is empty")]
    EmptyPattern(usize),
}

/// Union of glob patterns over parameter names.
///
/// `*` matches any run of characters, dots included, so `vision.dino.*`
/// covers the whole `vision.dino` subtree. A pattern without `*` must match
/// the name exactly.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Selector {
    patterns: Vec<String>,
}

impl Selector {
    pub fn new<I, S>(patterns: I) -> Result<Self, SelectorError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let patterns: Vec<String> = patterns.into_iter().map(Into::into).collect();
        if let Some(pos) = patterns.iter().position(String::is_empty) {
            return Err(SelectorError::EmptyPattern(pos));
        }
        Ok(Selector { patterns })
    }

    /// Selects nothing.
    pub fn empty() -> Self {
        Selector::default()
    }

    /// Selects every name.
    pub fn all() -> Self {
        Selector { patterns: vec!["*".to_string()] }
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn matches(&self, name: &str) -> bool {
        self.patterns.iter().any(|p| glob_match(p, name))
    }

    /// Matching names, sorted and deduplicated.
    pub fn select<'a, I>(&self, names: I) -> Vec<String>
    where
        I: IntoIterator<Item = &'a str>,
    {
        names
            .into_iter()
            .filter(|n| self.matches(n))
            .map(str::to_string)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

impl TryFrom<Vec<String>> for Selector {
    type Error = SelectorError;

    fn try_from(patterns: Vec<String>) -> Result<Self, Self::Error> {
        Selector::new(patterns)
    }
}

impl From<Selector> for Vec<String> {
    fn from(sel: Selector) -> Self {
        sel.patterns
    }
}

/// Names of `ckpt` matched by `sel`, in lexicographic order.
pub fn select(ckpt: &Checkpoint, sel: &Selector) -> Vec<String> {
    sel.select(ckpt.names())
}

fn glob_match(pattern: &str, name: &str) -> bool {
    let mut parts = pattern.split('*');
    let head = parts.next().unwrap_or_default();
    let Some(mut rest) = name.strip_prefix(head) else {
        return false;
    };
    let tail: Vec<&str> = parts.collect();
    let Some((last, middle)) = tail.split_last() else {
        // no wildcard at all
        return rest.is_empty();
    };
    for piece in middle {
        match rest.find(piece) {
            Some(idx) => rest = &rest[idx + piece.len()..],
            None => return false,
        }
    }
    rest.len() >= last.len() && rest.ends_with(last)
}
