//! Canonical identifiers and text normalization shared by every stage.
//!
//! Tool names arrive from schema files, gold plans and free-text documents in
//! different spellings. Everything is joined on the canonical form produced by
//! [`normalize_tool_id`].

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdError {
    #[error("identifier {raw:?} is empty after normalization")]
    EmptyAfterNormalization { raw: String },
}

/// Lowercases, strips leading/trailing punctuation and whitespace, and
/// collapses every internal whitespace run to a single underscore.
///
/// The function is idempotent.
pub fn normalize_tool_id(raw: &str) -> Result<String, IdError> {
    let lowered = raw.to_lowercase();
    let trimmed = lowered.trim_matches(|c: char| !c.is_alphanumeric());
    if trimmed.is_empty() {
        return Err(IdError::EmptyAfterNormalization {
            raw: raw.to_string(),
        });
    }
    let mut out = String::with_capacity(trimmed.len());
    let mut in_ws = false;
    for c in trimmed.chars() {
        if c.is_whitespace() {
            if !in_ws {
                out.push('_');
            }
            in_ws = true;
        } else {
            out.push(c);
            in_ws = false;
        }
    }
    Ok(out)
}

/// Lowercased alphanumeric tokens of `text`; underscores and punctuation split.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Token sequence joined with `_`. Used for lexical containment checks, so
/// `"Get Order"`, `"get-order"` and `"get_order"` all agree.
pub fn token_key(text: &str) -> String {
    tokens(text).collect::<Vec<_>>().join("_")
}

/// True when the token sequence of `needle` occurs as a contiguous run of
/// whole tokens inside `haystack`.
pub fn contains_token_run(haystack: &str, needle: &str) -> bool {
    let hay: Vec<String> = tokens(haystack).collect();
    let pat: Vec<String> = tokens(needle).collect();
    contains_run(&hay, &pat)
}

pub(crate) fn contains_run(hay: &[String], pat: &[String]) -> bool {
    if pat.is_empty() || pat.len() > hay.len() {
        return false;
    }
    hay.windows(pat.len()).any(|w| w == pat)
}
