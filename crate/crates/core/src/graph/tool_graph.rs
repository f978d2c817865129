use std::collections::BTreeMap;

use super::{FusedGraph, GraphBuilder, GraphError, Node, NodeId, Relation};
use crate::extract::ToolDependency;
use crate::schema::ToolSchema;

/// One tool node per schema and one `_can_use_this_tool_output` edge per
/// accepted `(source, target)` pair. Field-level dependencies between the
/// same pair collapse into a single edge whose weight is their count.
/// Rejected dependencies are ignored.
pub fn build_tool_graph(
    tools: &[ToolSchema],
    dependencies: &[ToolDependency],
) -> Result<FusedGraph, GraphError> {
    let mut b = GraphBuilder::new();
    for t in tools {
        b.add_node(Node::tool(&t.tool_id, &t.description));
    }
    let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for d in dependencies.iter().filter(|d| d.is_accepted()) {
        let c = &d.candidate;
        for t in [&c.source_tool, &c.target_tool] {
            if !b.contains(&NodeId::tool(t)) {
                return Err(GraphError::UnknownToolInDependency(t.clone()));
            }
        }
        *counts.entry((&c.source_tool, &c.target_tool)).or_insert(0) += 1;
    }
    for ((s, t), n) in counts {
        b.add_edge(
            NodeId::tool(s),
            NodeId::tool(t),
            Relation::CanUseThisToolOutput,
            n as f64,
        );
    }
    b.build()
}
