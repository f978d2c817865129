//! Record/replay fixture files.
//!
//! One JSON record per line: `{fingerprint, role, response, model?, recorded_at?}`,
//! sorted by fingerprint. Replay of an unknown fingerprint is always an error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use super::{GatewayRequest, Role};
use crate::jsonl;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("malformed fixture record at {0}")]
    Malformed(String),
    #[error("fingerprint {fingerprint} recorded under roles {first} and {second}")]
    Collision {
        fingerprint: String,
        first: Role,
        second: Role,
    },
    #[error("cannot read fixture file {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write fixture file {}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub fingerprint: String,
    pub role: Role,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recorded_at: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixtureFile {
    entries: BTreeMap<String, FixtureEntry>,
}

impl FixtureFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, fingerprint: &str) -> Option<&FixtureEntry> {
        self.entries.get(fingerprint)
    }

    pub fn entries(&self) -> impl Iterator<Item = &FixtureEntry> {
        self.entries.values()
    }

    /// Convenience for hand-authored fixtures: keys `response` by the
    /// fingerprint of `request`.
    pub fn insert_response(
        &mut self,
        request: &GatewayRequest,
        response: impl Into<String>,
    ) -> Result<bool, FixtureError> {
        self.insert(FixtureEntry {
            fingerprint: request.fingerprint(),
            role: request.role,
            response: response.into(),
            model: None,
            recorded_at: None,
        })
    }

    /// Inserts an entry; a later entry for the same fingerprint wins.
    /// Returns `true` when an existing, different response was replaced.
    pub fn insert(&mut self, entry: FixtureEntry) -> Result<bool, FixtureError> {
        match self.entries.get(&entry.fingerprint) {
            Some(prev) if prev.role != entry.role => Err(FixtureError::Collision {
                fingerprint: entry.fingerprint.clone(),
                first: prev.role,
                second: entry.role,
            }),
            Some(prev) => {
                let conflict = prev.response != entry.response;
                if conflict {
                    warn!(fingerprint = %entry.fingerprint, "fixture conflict, later response wins");
                }
                self.entries.insert(entry.fingerprint.clone(), entry);
                Ok(conflict)
            }
            None => {
                self.entries.insert(entry.fingerprint.clone(), entry);
                Ok(false)
            }
        }
    }

    /// Union keyed by fingerprint; entries of `other` win. Returns the
    /// number of conflicting responses that were overwritten.
    pub fn merge(&mut self, other: FixtureFile) -> Result<usize, FixtureError> {
        let mut conflicts = 0;
        for entry in other.entries.into_values() {
            if self.insert(entry)? {
                conflicts += 1;
            }
        }
        Ok(conflicts)
    }

    pub fn parse(content: &str) -> Result<Self, FixtureError> {
        let mut file = FixtureFile::new();
        for line in jsonl::lines(content) {
            let entry: FixtureEntry = jsonl::parse_line(&line).map_err(FixtureError::Malformed)?;
            file.insert(entry)?;
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        let content = fs::read_to_string(path).map_err(|source| FixtureError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&content)
    }

    pub fn to_jsonl(&self) -> String {
        jsonl::join_lines(self.entries.values().map(jsonl::to_line))
    }

    pub fn save(&self, path: &Path) -> Result<(), FixtureError> {
        jsonl::write_text(path, &self.to_jsonl()).map_err(|source| FixtureError::Write {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Builds a fixture file from a completed live session.
pub fn record_session(
    requests: &[GatewayRequest],
    responses: &[String],
    model: Option<&str>,
) -> Result<FixtureFile, FixtureError> {
    let mut file = FixtureFile::new();
    for (req, resp) in requests.iter().zip(responses) {
        file.insert(FixtureEntry {
            fingerprint: req.fingerprint(),
            role: req.role,
            response: resp.clone(),
            model: model.map(str::to_string),
            recorded_at: None,
        })?;
    }
    Ok(file)
}
