use std::collections::{BTreeMap, BTreeSet};

use super::{FusedGraph, GraphError, NodeId, PprResult};

/// Induced subgraph on the `top_n` highest-scoring nodes (ties by canonical
/// id) plus every seed node.
pub fn extract_subgraph(
    graph: &FusedGraph,
    scores: &PprResult,
    seeds: &BTreeMap<NodeId, f64>,
    top_n: usize,
) -> Result<FusedGraph, GraphError> {
    if top_n == 0 {
        return Err(GraphError::InvalidTopN);
    }
    let mut selected: BTreeSet<usize> = scores.ranking().into_iter().take(top_n).collect();
    for id in seeds.keys() {
        let i = graph
            .index_of(id)
            .ok_or_else(|| GraphError::UnknownSeedNode(id.clone()))?;
        selected.insert(i);
    }
    Ok(graph.induced(&selected))
}
