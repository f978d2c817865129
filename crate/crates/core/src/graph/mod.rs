//! Heterogeneous tool/document graph.
//!
//! Nodes are tools, document entities and document passages. Edges carry one
//! of a small relation vocabulary: `_can_use_this_tool_output` between tools,
//! `doc_triple:<predicate>` inside the document graph, and `mentions_tool`
//! from document nodes to tools after fusion. A [`FusedGraph`] is immutable
//! once built; nodes and edges are kept in canonical (sorted) order.

mod docs;
mod fuse;
mod io;
mod ppr;
mod subgraph;
mod tool_graph;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub(crate) use docs::stub_extract;
pub use docs::{
    ingest_document_graph, EntityExtractor, GatewayExtractor, HeuristicExtractor,
    PassageExtraction, Triple,
};
pub use fuse::fuse;
pub use io::GRAPH_FORMAT;
pub use ppr::{personalized_pagerank, DanglingPolicy, EdgeDirection, PprConfig, PprResult};
pub use subgraph::extract_subgraph;
pub use tool_graph::build_tool_graph;

pub const CAN_USE_THIS_TOOL_OUTPUT: &str = "_can_use_this_tool_output";
pub const MENTIONS_TOOL: &str = "mentions_tool";
pub const MENTIONED_IN: &str = "mentioned_in";

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("dependency references unknown tool {0:?}")]
    UnknownToolInDependency(String),
    #[error("edge endpoint {0} is not a node")]
    DanglingEdge(NodeId),
    #[error("self-loop {0} is not allowed for {CAN_USE_THIS_TOOL_OUTPUT}")]
    SelfDependency(NodeId),
    #[error("edge weight must be positive and finite, got {0}")]
    BadWeight(f64),
    #[error("seed set is empty")]
    EmptySeeds,
    #[error("seed node {0} is not in the graph")]
    UnknownSeedNode(NodeId),
    #[error("seed masses must be non-negative and sum to 1 (sum = {sum})")]
    BadSeedMass { sum: f64 },
    #[error("invalid PPR configuration: {0}")]
    InvalidConfig(String),
    #[error("top_n must be at least 1")]
    InvalidTopN,
    #[error("entity extraction failed: {0}")]
    Extraction(String),
    #[error("malformed graph file: {0}")]
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
pub enum NodeKind {
    Tool,
    Entity,
    Passage,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Tool => "tool",
            NodeKind::Entity => "entity",
            NodeKind::Passage => "passage",
        }
    }
}

/// Stable identifier `"<kind>:<label>"`; equal kind and label give equal ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(kind: NodeKind, label: &str) -> Self {
        NodeId(format!("{}:{label}", kind.as_str()))
    }

    pub fn tool(tool_id: &str) -> Self {
        Self::new(NodeKind::Tool, tool_id)
    }

    pub fn entity(label: &str) -> Self {
        Self::new(NodeKind::Entity, label)
    }

    pub fn passage(doc_id: &str, paragraph: usize) -> Self {
        Self::new(NodeKind::Passage, &format!("{doc_id}#{paragraph}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Parses `"<kind>:<label>"`.
    pub fn parse(raw: &str) -> Option<Self> {
        let (kind, label) = raw.split_once(':')?;
        matches!(kind, "tool" | "entity" | "passage").then_some(())?;
        (!label.is_empty()).then(|| NodeId(raw.to_string()))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "ref", rename_all = "lowercase")]
pub enum PayloadRef {
    Tool {
        tool_id: String,
    },
    Passage {
        doc_id: String,
        start: usize,
        end: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub label: String,
    /// Tool description or passage body.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_ref: Option<PayloadRef>,
}

impl Node {
    pub fn tool(tool_id: &str, description: &str) -> Self {
        Node {
            id: NodeId::tool(tool_id),
            kind: NodeKind::Tool,
            label: tool_id.to_string(),
            text: Some(description.to_string()),
            payload_ref: Some(PayloadRef::Tool {
                tool_id: tool_id.to_string(),
            }),
        }
    }

    pub fn entity(label: &str) -> Self {
        Node {
            id: NodeId::entity(label),
            kind: NodeKind::Entity,
            label: label.to_string(),
            text: None,
            payload_ref: None,
        }
    }

    pub fn passage(doc_id: &str, paragraph: usize, start: usize, end: usize, text: &str) -> Self {
        let id = NodeId::passage(doc_id, paragraph);
        Node {
            label: format!("{doc_id}#{paragraph}"),
            id,
            kind: NodeKind::Passage,
            text: Some(text.to_string()),
            payload_ref: Some(PayloadRef::Passage {
                doc_id: doc_id.to_string(),
                start,
                end,
            }),
        }
    }

    pub fn tool_id(&self) -> Option<&str> {
        match &self.payload_ref {
            Some(PayloadRef::Tool { tool_id }) => Some(tool_id),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    CanUseThisToolOutput,
    DocTriple(String),
    MentionsTool,
}

impl Relation {
    pub fn as_string(&self) -> String {
        match self {
            Relation::CanUseThisToolOutput => CAN_USE_THIS_TOOL_OUTPUT.to_string(),
            Relation::DocTriple(p) => format!("doc_triple:{p}"),
            Relation::MentionsTool => MENTIONS_TOOL.to_string(),
        }
    }

    pub fn parse(raw: &str) -> Option<Self> {
        match raw {
            CAN_USE_THIS_TOOL_OUTPUT => Some(Relation::CanUseThisToolOutput),
            MENTIONS_TOOL => Some(Relation::MentionsTool),
            _ => raw
                .strip_prefix("doc_triple:")
                .filter(|p| !p.is_empty())
                .map(|p| Relation::DocTriple(p.to_string())),
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_string())
    }
}

impl Serialize for Relation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.as_string())
    }
}

impl<'de> Deserialize<'de> for Relation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Relation::parse(&raw)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown relation {raw:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub relation: Relation,
    pub weight: f64,
}

type EdgeKey = (NodeId, NodeId, Relation);

/// Mutable accumulator; [`GraphBuilder::build`] validates and freezes it.
#[derive(Debug, Clone, Default)]
pub struct GraphBuilder {
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<EdgeKey, f64>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a node unless one with the same id already exists.
    pub fn add_node(&mut self, node: Node) {
        self.nodes.entry(node.id.clone()).or_insert(node);
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    /// Adds `weight` to the edge, creating it if absent.
    pub fn add_edge(&mut self, src: NodeId, dst: NodeId, relation: Relation, weight: f64) {
        *self.edges.entry((src, dst, relation)).or_insert(0.0) += weight;
    }

    /// Set-union insertion: an existing edge keeps the larger weight.
    pub fn union_edge(&mut self, src: NodeId, dst: NodeId, relation: Relation, weight: f64) {
        let w = self.edges.entry((src, dst, relation)).or_insert(weight);
        if weight > *w {
            *w = weight;
        }
    }

    pub fn build(self) -> Result<FusedGraph, GraphError> {
        for ((src, dst, rel), &w) in &self.edges {
            for end in [src, dst] {
                if !self.nodes.contains_key(end) {
                    return Err(GraphError::DanglingEdge(end.clone()));
                }
            }
            if *rel == Relation::CanUseThisToolOutput && src == dst {
                return Err(GraphError::SelfDependency(src.clone()));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(GraphError::BadWeight(w));
            }
        }
        let nodes: Vec<Node> = self.nodes.into_values().collect();
        let edges: Vec<Edge> = self
            .edges
            .into_iter()
            .map(|((src, dst, relation), weight)| Edge {
                src,
                dst,
                relation,
                weight,
            })
            .collect();
        Ok(FusedGraph::from_sorted(nodes, edges))
    }
}

#[derive(Debug, Clone)]
pub struct FusedGraph {
    nodes: Vec<Node>,
    index: HashMap<NodeId, usize>,
    edges: Vec<Edge>,
    ends: Vec<(usize, usize)>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
    relation_counts: BTreeMap<String, usize>,
}

impl PartialEq for FusedGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl Default for FusedGraph {
    fn default() -> Self {
        Self::from_sorted(Vec::new(), Vec::new())
    }
}

impl FusedGraph {
    fn from_sorted(nodes: Vec<Node>, edges: Vec<Edge>) -> Self {
        let index: HashMap<NodeId, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();
        let mut out_adj = vec![Vec::new(); nodes.len()];
        let mut in_adj = vec![Vec::new(); nodes.len()];
        let mut ends = Vec::with_capacity(edges.len());
        let mut relation_counts = BTreeMap::new();
        for (e, edge) in edges.iter().enumerate() {
            let (s, d) = (index[&edge.src], index[&edge.dst]);
            out_adj[s].push(e);
            in_adj[d].push(e);
            ends.push((s, d));
            *relation_counts
                .entry(edge.relation.as_string())
                .or_insert(0) += 1;
        }
        Self {
            nodes,
            index,
            edges,
            ends,
            out_adj,
            in_adj,
            relation_counts,
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in canonical id order.
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Edges in canonical `(src, dst, relation)` order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn index_of(&self, id: &NodeId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.index.contains_key(id)
    }

    pub fn edge_endpoints(&self, edge: usize) -> (usize, usize) {
        self.ends[edge]
    }

    pub fn out_edges(&self, node: usize) -> impl Iterator<Item = &Edge> {
        self.out_adj[node].iter().map(|&e| &self.edges[e])
    }

    pub fn in_edges(&self, node: usize) -> impl Iterator<Item = &Edge> {
        self.in_adj[node].iter().map(|&e| &self.edges[e])
    }

    pub fn relation_counts(&self) -> &BTreeMap<String, usize> {
        &self.relation_counts
    }

    pub fn relation_count(&self, relation: &Relation) -> usize {
        self.relation_counts
            .get(&relation.as_string())
            .copied()
            .unwrap_or(0)
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(move |n| n.kind == kind)
    }

    /// Edge lookup by `(src, dst, relation)`.
    pub fn edge(&self, src: &NodeId, dst: &NodeId, relation: &Relation) -> Option<&Edge> {
        let s = self.index_of(src)?;
        self.out_edges(s)
            .find(|e| &e.dst == dst && &e.relation == relation)
    }

    pub fn has_dependency(&self, source_tool: &str, target_tool: &str) -> bool {
        self.edge(
            &NodeId::tool(source_tool),
            &NodeId::tool(target_tool),
            &Relation::CanUseThisToolOutput,
        )
        .is_some()
    }

    /// Induced subgraph on the given node indices.
    pub fn induced(&self, selected: &BTreeSet<usize>) -> FusedGraph {
        let nodes: Vec<Node> = selected.iter().map(|&i| self.nodes[i].clone()).collect();
        let edges: Vec<Edge> = self
            .edges
            .iter()
            .zip(&self.ends)
            .filter(|(_, (s, d))| selected.contains(s) && selected.contains(d))
            .map(|(e, _)| e.clone())
            .collect();
        FusedGraph::from_sorted(nodes, edges)
    }

    /// Re-opens the graph for modification.
    pub fn to_builder(&self) -> GraphBuilder {
        GraphBuilder {
            nodes: self
                .nodes
                .iter()
                .map(|n| (n.id.clone(), n.clone()))
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| ((e.src.clone(), e.dst.clone(), e.relation.clone()), e.weight))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_ids_are_stable() {
        assert_eq!(NodeId::entity("warehouse"), NodeId::entity("warehouse"));
        assert_ne!(NodeId::entity("warehouse"), NodeId::tool("warehouse"));
        assert_eq!(NodeId::passage("d1", 2).as_str(), "passage:d1#2");
        assert_eq!(
            NodeId::parse("tool:get_order"),
            Some(NodeId::tool("get_order"))
        );
        assert_eq!(NodeId::parse("bogus:x"), None);
    }

    #[test]
    fn relation_strings() {
        for r in [
            Relation::CanUseThisToolOutput,
            Relation::MentionsTool,
            Relation::DocTriple("reports".into()),
        ] {
            assert_eq!(Relation::parse(&r.as_string()), Some(r));
        }
        assert_eq!(
            Relation::CanUseThisToolOutput.as_string(),
            "_can_use_this_tool_output"
        );
        assert_eq!(Relation::parse("doc_triple:"), None);
    }

    #[test]
    fn builder_rejects_dangling_and_self_dependency() {
        let mut b = GraphBuilder::new();
        b.add_node(Node::tool("a", ""));
        b.add_edge(
            NodeId::tool("a"),
            NodeId::tool("b"),
            Relation::CanUseThisToolOutput,
            1.0,
        );
        assert!(matches!(b.build(), Err(GraphError::DanglingEdge(_))));

        let mut b = GraphBuilder::new();
        b.add_node(Node::tool("a", ""));
        b.add_edge(
            NodeId::tool("a"),
            NodeId::tool("a"),
            Relation::CanUseThisToolOutput,
            1.0,
        );
        assert!(matches!(b.build(), Err(GraphError::SelfDependency(_))));
    }

    #[test]
    fn adjacency_is_consistent() {
        let mut b = GraphBuilder::new();
        for t in ["a", "b", "c"] {
            b.add_node(Node::tool(t, ""));
        }
        b.add_edge(
            NodeId::tool("a"),
            NodeId::tool("b"),
            Relation::CanUseThisToolOutput,
            1.0,
        );
        b.add_edge(
            NodeId::tool("c"),
            NodeId::tool("b"),
            Relation::CanUseThisToolOutput,
            2.0,
        );
        let g = b.build().unwrap();
        let out_total: usize = (0..g.node_count()).map(|i| g.out_edges(i).count()).sum();
        let in_total: usize = (0..g.node_count()).map(|i| g.in_edges(i).count()).sum();
        assert_eq!((out_total, in_total, g.edge_count()), (2, 2, 2));
        let b_idx = g.index_of(&NodeId::tool("b")).unwrap();
        assert_eq!(g.in_edges(b_idx).count(), 2);
        assert!(g.has_dependency("c", "b"));
        assert!(!g.has_dependency("b", "c"));
        assert_eq!(g.relation_count(&Relation::CanUseThisToolOutput), 2);
        assert_eq!(g.to_builder().build().unwrap(), g);
    }
}
