//! Exact in-memory vector store with a line-delimited persistence file:
//! one header record (`dims`, entry count) then one record per entry,
//! sorted by id.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::embed::cosine;
use crate::jsonl;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("vector has {actual} dimensions, store expects {expected}")]
    DimsMismatch { expected: usize, actual: usize },
    #[error("duplicate store id {0:?}")]
    DuplicateId(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("malformed store file: {0}")]
    Format(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Triplet,
    Passage,
    Artifact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub vector: Vec<f32>,
    pub kind: EntryKind,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    dims: usize,
    entries: BTreeMap<String, StoreEntry>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    dims: usize,
    entries: usize,
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    id: String,
    #[serde(flatten)]
    entry: StoreEntry,
}

const STORE_FORMAT: &str = "toolweave-store";

/// Heap item ordered so that the *worst* hit sits on top.
struct Hit<'a> {
    score: f64,
    id: &'a str,
}

impl PartialEq for Hit<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Hit<'_> {}

impl PartialOrd for Hit<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Hit<'_> {
    // "Greater" means worse: lower score, or equal score and larger id.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.id.cmp(other.id))
    }
}

impl VectorStore {
    /// A store created with `dims == 0` adopts the width of its first vector.
    pub fn new(dims: usize) -> Self {
        Self {
            dims,
            entries: BTreeMap::new(),
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&StoreEntry> {
        self.entries.get(id)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &StoreEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn count_kind(&self, kind: EntryKind) -> usize {
        self.entries.values().filter(|e| e.kind == kind).count()
    }

    /// Drops every entry of `kind`; returns how many were removed.
    pub fn remove_kind(&mut self, kind: EntryKind) -> usize {
        let before = self.entries.len();
        self.entries.retain(|_, e| e.kind != kind);
        before - self.entries.len()
    }

    pub fn insert(&mut self, id: impl Into<String>, entry: StoreEntry) -> Result<(), StoreError> {
        let id = id.into();
        if self.dims == 0 && self.entries.is_empty() {
            self.dims = entry.vector.len();
        }
        if entry.vector.len() != self.dims {
            return Err(StoreError::DimsMismatch {
                expected: self.dims,
                actual: entry.vector.len(),
            });
        }
        if self.entries.contains_key(&id) {
            return Err(StoreError::DuplicateId(id));
        }
        self.entries.insert(id, entry);
        Ok(())
    }

    /// Exact cosine top-k, descending score, ties by id. Returns at most
    /// `k` entries of the requested kind.
    pub fn top_k(
        &self,
        query: &[f32],
        k: usize,
        kind: Option<EntryKind>,
    ) -> Result<Vec<(String, f64)>, StoreError> {
        if k == 0 {
            return Err(StoreError::InvalidK);
        }
        if self.entries.is_empty() {
            return Ok(Vec::new());
        }
        if query.len() != self.dims {
            return Err(StoreError::DimsMismatch {
                expected: self.dims,
                actual: query.len(),
            });
        }
        let mut heap: BinaryHeap<Hit<'_>> = BinaryHeap::with_capacity(k + 1);
        for (id, e) in &self.entries {
            if kind.is_some_and(|k| k != e.kind) {
                continue;
            }
            let hit = Hit {
                score: cosine(query, &e.vector),
                id,
            };
            if heap.len() < k {
                heap.push(hit);
            } else if heap.peek().is_some_and(|worst| hit < *worst) {
                heap.pop();
                heap.push(hit);
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|h| (h.id.to_string(), h.score))
            .collect())
    }

    pub fn to_jsonl(&self) -> String {
        let header = Header {
            format: STORE_FORMAT.into(),
            dims: self.dims,
            entries: self.entries.len(),
        };
        let mut out = jsonl::to_line(&header);
        out.push('\n');
        for (id, entry) in &self.entries {
            out.push_str(&jsonl::to_line(&EntryRecord {
                id: id.clone(),
                entry: entry.clone(),
            }));
            out.push('\n');
        }
        out
    }

    pub fn parse(content: &str) -> Result<Self, StoreError> {
        let mut lines = jsonl::lines(content);
        let first = lines
            .next()
            .ok_or_else(|| StoreError::Format("empty file".into()))?;
        let header: Header = jsonl::parse_line(&first).map_err(StoreError::Format)?;
        if header.format != STORE_FORMAT {
            return Err(StoreError::Format(format!(
                "unexpected format {:?}",
                header.format
            )));
        }
        let mut store = VectorStore::new(header.dims);
        for line in lines {
            let rec: EntryRecord = jsonl::parse_line(&line).map_err(StoreError::Format)?;
            store.insert(rec.id, rec.entry)?;
        }
        if store.len() != header.entries {
            return Err(StoreError::Format(format!(
                "header declares {} entries, found {}",
                header.entries,
                store.len()
            )));
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let content = std::fs::read_to_string(path).map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&content)
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        jsonl::write_text(path, &self.to_jsonl()).map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}
