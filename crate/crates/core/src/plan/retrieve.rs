use std::collections::{BTreeMap, BTreeSet};

use super::{PassageContext, PlanError};
use crate::gateway::Gateway;
use crate::graph::{extract_subgraph, personalized_pagerank, FusedGraph, NodeId, PprConfig};
use crate::retrieval::{embed, EntryKind, VectorStore};

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalConfig {
    pub triplet_k: usize,
    pub passage_k: usize,
    /// Nodes kept from the PPR ranking (seeds are always kept).
    pub top_n: usize,
    /// When false the context is the retrieved triplet endpoints and
    /// passages only, with no graph walk.
    pub use_ppr: bool,
    /// Also seed PPR from retrieved passages, not only triplet endpoints.
    pub passage_seeds: bool,
    pub ppr: PprConfig,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            triplet_k: 20,
            passage_k: 10,
            top_n: 30,
            use_ppr: true,
            passage_seeds: false,
            ppr: PprConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryContext {
    /// Normalized seed distribution.
    pub seeds: BTreeMap<NodeId, f64>,
    pub triplet_hits: Vec<(String, f64)>,
    pub passages: Vec<PassageContext>,
    pub subgraph: FusedGraph,
    /// PPR scores of subgraph nodes, or seed mass when PPR is off.
    pub node_scores: BTreeMap<NodeId, f64>,
}

fn endpoint(graph: &FusedGraph, raw: Option<&String>) -> Option<NodeId> {
    raw.and_then(|r| NodeId::parse(r))
        .filter(|id| graph.contains(id))
}

/// Seed mass per node is the summed retrieval score of the hits touching
/// it, clamped at zero; if every hit scored zero the touched nodes share
/// mass uniformly.
fn seed_distribution(hits: &[(NodeId, f64)]) -> BTreeMap<NodeId, f64> {
    let mut mass: BTreeMap<NodeId, f64> = BTreeMap::new();
    for (id, s) in hits {
        *mass.entry(id.clone()).or_insert(0.0) += s.max(0.0);
    }
    let total: f64 = mass.values().sum();
    if total > 0.0 {
        mass.values_mut().for_each(|v| *v /= total);
    } else if !mass.is_empty() {
        let u = 1.0 / mass.len() as f64;
        mass.values_mut().for_each(|v| *v = u);
    }
    mass
}

/// Embeds the query, takes the top triplets and passages from the store,
/// seeds PPR with the triplet endpoints and cuts the top-n subgraph.
pub fn retrieve_context(
    query: &str,
    graph: &FusedGraph,
    store: &VectorStore,
    gateway: &Gateway,
    config: &RetrievalConfig,
) -> Result<QueryContext, PlanError> {
    let q = embed(query, gateway).map_err(crate::retrieval::RetrievalError::from)?;
    let triplet_hits = top(store, &q.values, config.triplet_k, EntryKind::Triplet)?;
    let passage_hits = top(store, &q.values, config.passage_k, EntryKind::Passage)?;

    let mut seed_hits = Vec::new();
    for (id, score) in &triplet_hits {
        let Some(entry) = store.get(id) else { continue };
        for key in ["src", "dst"] {
            if let Some(n) = endpoint(graph, entry.metadata.get(key)) {
                seed_hits.push((n, *score));
            }
        }
    }
    let mut passages = Vec::new();
    let mut passage_nodes = Vec::new();
    for (id, score) in &passage_hits {
        let Some(n) = store
            .get(id)
            .and_then(|e| endpoint(graph, e.metadata.get("node")))
        else {
            continue;
        };
        let text = graph
            .node(&n)
            .and_then(|node| node.text.clone())
            .unwrap_or_default();
        passages.push(PassageContext {
            id: n.to_string(),
            text,
            score: *score,
        });
        passage_nodes.push((n, *score));
    }
    if config.passage_seeds || seed_hits.is_empty() {
        seed_hits.extend(passage_nodes.iter().cloned());
    }
    let seeds = seed_distribution(&seed_hits);
    if seeds.is_empty() {
        return Err(PlanError::EmptySubgraph);
    }

    let (subgraph, node_scores) = if config.use_ppr {
        let ppr = personalized_pagerank(graph, &seeds, &config.ppr)?;
        let sub = extract_subgraph(graph, &ppr, &seeds, config.top_n)?;
        let scores = sub
            .nodes()
            .iter()
            .map(|n| (n.id.clone(), ppr.score(graph, &n.id).unwrap_or(0.0)))
            .collect();
        (sub, scores)
    } else {
        let selected: BTreeSet<usize> = seeds
            .keys()
            .chain(passage_nodes.iter().map(|(n, _)| n))
            .filter_map(|id| graph.index_of(id))
            .collect();
        (graph.induced(&selected), seeds.clone())
    };
    Ok(QueryContext {
        seeds,
        triplet_hits,
        passages,
        subgraph,
        node_scores,
    })
}

fn top(
    store: &VectorStore,
    q: &[f32],
    k: usize,
    kind: EntryKind,
) -> Result<Vec<(String, f64)>, PlanError> {
    if k == 0 {
        return Ok(Vec::new());
    }
    store
        .top_k(q, k, Some(kind))
        .map_err(|e| PlanError::Retrieval(e.into()))
}
