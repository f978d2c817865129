//! Dense half of the retrieval: verbalized tool triplets and document
//! passages embedded into an exact cosine vector store.

mod embed;
mod store;

use std::collections::BTreeMap;

use thiserror::Error;

pub(crate) use embed::stub_embed_response;
pub use embed::{
    cosine, embed, embed_batch, stub_buckets, stub_embedding, EmbedError, EmbeddingVector,
    STUB_DIMS,
};
pub use store::{EntryKind, StoreEntry, StoreError, VectorStore};

use crate::gateway::Gateway;
use crate::graph::{Edge, FusedGraph, NodeId, NodeKind, Relation};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("only {expected} edges can be verbalized as triplets, got {actual}")]
    WrongRelation {
        expected: &'static str,
        actual: String,
    },
    #[error("edge endpoint {0} missing from graph")]
    MissingNode(NodeId),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletText {
    pub src: NodeId,
    pub dst: NodeId,
    pub text: String,
}

impl TripletText {
    pub fn store_id(&self) -> String {
        triplet_store_id(&self.src, &self.dst)
    }
}

pub fn triplet_store_id(src: &NodeId, dst: &NodeId) -> String {
    format!(
        "triplet:{}->{}",
        src.as_str().trim_start_matches("tool:"),
        dst.as_str().trim_start_matches("tool:")
    )
}

/// `"SOURCE —can_use_this_tool_output→ TARGET: <source description> / <target description>"`
pub fn verbalize_triplet(edge: &Edge, graph: &FusedGraph) -> Result<TripletText, RetrievalError> {
    if edge.relation != Relation::CanUseThisToolOutput {
        return Err(RetrievalError::WrongRelation {
            expected: crate::graph::CAN_USE_THIS_TOOL_OUTPUT,
            actual: edge.relation.as_string(),
        });
    }
    let src = graph
        .node(&edge.src)
        .ok_or_else(|| RetrievalError::MissingNode(edge.src.clone()))?;
    let dst = graph
        .node(&edge.dst)
        .ok_or_else(|| RetrievalError::MissingNode(edge.dst.clone()))?;
    let text = format!(
        "{} \u{2014}can_use_this_tool_output\u{2192} {}: {} / {}",
        src.label,
        dst.label,
        src.text.as_deref().unwrap_or_default(),
        dst.text.as_deref().unwrap_or_default()
    );
    Ok(TripletText {
        src: edge.src.clone(),
        dst: edge.dst.clone(),
        text,
    })
}

const EMBED_BATCH: usize = 64;

/// Embeds every tool triplet and passage of `graph` into a fresh store.
/// Triplet ids are `triplet:<src>-><dst>`, passage ids are their node ids.
pub fn index_graph(graph: &FusedGraph, gateway: &Gateway) -> Result<VectorStore, RetrievalError> {
    let mut items: Vec<(String, EntryKind, BTreeMap<String, String>, String)> = Vec::new();
    for edge in graph
        .edges()
        .iter()
        .filter(|e| e.relation == Relation::CanUseThisToolOutput)
    {
        let t = verbalize_triplet(edge, graph)?;
        let meta = BTreeMap::from([
            ("src".to_string(), t.src.to_string()),
            ("dst".to_string(), t.dst.to_string()),
        ]);
        items.push((t.store_id(), EntryKind::Triplet, meta, t.text));
    }
    for node in graph.nodes_of_kind(NodeKind::Passage) {
        let Some(text) = node.text.as_deref().filter(|t| !t.trim().is_empty()) else {
            continue;
        };
        let meta = BTreeMap::from([("node".to_string(), node.id.to_string())]);
        items.push((
            node.id.to_string(),
            EntryKind::Passage,
            meta,
            text.to_string(),
        ));
    }

    let mut store = VectorStore::new(0);
    for chunk in items.chunks(EMBED_BATCH) {
        let texts: Vec<String> = chunk.iter().map(|i| i.3.clone()).collect();
        let vectors = embed_batch(&texts, gateway)?;
        for ((id, kind, metadata, _), v) in chunk.iter().zip(vectors) {
            store.insert(
                id.clone(),
                StoreEntry {
                    vector: v.values,
                    kind: *kind,
                    metadata: metadata.clone(),
                },
            )?;
        }
    }
    Ok(store)
}
