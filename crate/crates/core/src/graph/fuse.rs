use super::{FusedGraph, GraphError, Node, NodeKind, Relation};
use crate::ids::{contains_run, tokens};

fn token_vec(text: &str) -> Vec<String> {
    tokens(text).collect()
}

/// Union of both graphs plus a `mentions_tool` edge from every entity or
/// passage whose label/body contains a tool id as a whole-token run.
///
/// Idempotent and commutative up to node/edge set equality. Duplicate edges
/// keep the larger weight.
pub fn fuse(left: &FusedGraph, right: &FusedGraph) -> Result<FusedGraph, GraphError> {
    let mut b = left.to_builder();
    for n in right.nodes() {
        b.add_node(n.clone());
    }
    for e in right.edges() {
        b.union_edge(e.src.clone(), e.dst.clone(), e.relation.clone(), e.weight);
    }
    let merged = b.build()?;

    let tools: Vec<(&Node, Vec<String>)> = merged
        .nodes_of_kind(NodeKind::Tool)
        .map(|n| (n, token_vec(n.tool_id().unwrap_or(&n.label))))
        .filter(|(_, t)| !t.is_empty())
        .collect();
    if tools.is_empty() {
        return Ok(merged);
    }
    let mut b = merged.to_builder();
    for n in merged.nodes() {
        let haystack = match n.kind {
            NodeKind::Tool => continue,
            NodeKind::Entity => token_vec(&n.label),
            NodeKind::Passage => token_vec(n.text.as_deref().unwrap_or_default()),
        };
        for (tool, pattern) in &tools {
            if contains_run(&haystack, pattern) {
                b.union_edge(n.id.clone(), tool.id.clone(), Relation::MentionsTool, 1.0);
            }
        }
    }
    b.build()
}
