//! Graph file format: a header record, then node records, then edge records,
//! one JSON object per line in canonical order.
//!
//! ```text
//! {"record":"header","format":"toolweave-graph","version":1,"nodes":2,"edges":1,"relations":["_can_use_this_tool_output"]}
//! {"record":"node","id":"tool:a","kind":"tool","label":"a",...}
//! {"record":"edge","src":"tool:a","dst":"tool:b","relation":"_can_use_this_tool_output","weight":1.0}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Edge, FusedGraph, GraphBuilder, GraphError, Node};
use crate::jsonl;

pub const GRAPH_FORMAT: &str = "toolweave-graph";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record {
    Header {
        format: String,
        version: u32,
        nodes: usize,
        edges: usize,
        relations: Vec<String>,
    },
    Node(Node),
    Edge(Edge),
}

impl FusedGraph {
    pub fn to_jsonl(&self) -> String {
        let header = Record::Header {
            format: GRAPH_FORMAT.into(),
            version: VERSION,
            nodes: self.node_count(),
            edges: self.edge_count(),
            relations: self.relation_counts().keys().cloned().collect(),
        };
        let mut out = jsonl::to_line(&header);
        out.push('\n');
        for n in self.nodes() {
            out.push_str(&jsonl::to_line(&Record::Node(n.clone())));
            out.push('\n');
        }
        for e in self.edges() {
            out.push_str(&jsonl::to_line(&Record::Edge(e.clone())));
            out.push('\n');
        }
        out
    }

    pub fn parse(content: &str) -> Result<FusedGraph, GraphError> {
        let mut lines = jsonl::lines(content);
        let first = lines
            .next()
            .ok_or_else(|| GraphError::Format("empty file".into()))?;
        let (node_count, edge_count, relations) =
            match jsonl::parse_line(&first).map_err(GraphError::Format)? {
                Record::Header {
                    format,
                    version,
                    nodes,
                    edges,
                    relations,
                } => {
                    if format != GRAPH_FORMAT || version != VERSION {
                        return Err(GraphError::Format(format!(
                            "unsupported format {format} v{version}"
                        )));
                    }
                    (nodes, edges, relations)
                }
                _ => return Err(GraphError::Format("first record must be the header".into())),
            };
        let mut b = GraphBuilder::new();
        let (mut seen_nodes, mut seen_edges) = (0, 0);
        for line in lines {
            match jsonl::parse_line(&line).map_err(GraphError::Format)? {
                Record::Header { .. } => {
                    return Err(GraphError::Format(format!(
                        "line {}: second header",
                        line.number
                    )))
                }
                Record::Node(n) => {
                    if seen_edges > 0 {
                        return Err(GraphError::Format(format!(
                            "line {}: node after edges",
                            line.number
                        )));
                    }
                    if b.contains(&n.id) {
                        return Err(GraphError::Format(format!(
                            "line {}: duplicate node {}",
                            line.number, n.id
                        )));
                    }
                    b.add_node(n);
                    seen_nodes += 1;
                }
                Record::Edge(e) => {
                    b.add_edge(e.src, e.dst, e.relation, e.weight);
                    seen_edges += 1;
                }
            }
        }
        let g = b.build()?;
        if seen_nodes != node_count || seen_edges != edge_count || g.edge_count() != edge_count {
            return Err(GraphError::Format(format!(
                "header declares {node_count} nodes / {edge_count} edges, file has {seen_nodes} / {seen_edges}"
            )));
        }
        if g.relation_counts().keys().ne(relations.iter()) {
            return Err(GraphError::Format(
                "relation vocabulary does not match edges".into(),
            ));
        }
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<FusedGraph, GraphError> {
        let content = std::fs::read_to_string(path).map_err(|source| GraphError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&content)
    }

    pub fn save(&self, path: &Path) -> Result<(), GraphError> {
        jsonl::write_text(path, &self.to_jsonl()).map_err(|source| GraphError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{NodeId, Relation};
    use proptest::prelude::*;

    fn sample() -> FusedGraph {
        let mut b = GraphBuilder::new();
        b.add_node(Node::tool("a", "first tool"));
        b.add_node(Node::tool("b", "second \"quoted\" tool"));
        b.add_node(Node::entity("warehouse"));
        b.add_node(Node::passage("d1", 0, 0, 12, "Warehouse a."));
        b.add_edge(
            NodeId::tool("a"),
            NodeId::tool("b"),
            Relation::CanUseThisToolOutput,
            2.0,
        );
        b.add_edge(
            NodeId::entity("warehouse"),
            NodeId::passage("d1", 0),
            Relation::DocTriple("mentioned_in".into()),
            0.1 + 0.2,
        );
        b.add_edge(
            NodeId::passage("d1", 0),
            NodeId::tool("a"),
            Relation::MentionsTool,
            1.0,
        );
        b.build().unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let g = sample();
        let text = g.to_jsonl();
        assert!(text.starts_with("{\"record\":\"header\",\"format\":\"toolweave-graph\""));
        let back = FusedGraph::parse(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn header_mismatch_is_rejected() {
        let text = sample()
            .to_jsonl()
            .replacen("\"edges\":3", "\"edges\":4", 1);
        assert!(matches!(
            FusedGraph::parse(&text),
            Err(GraphError::Format(_))
        ));
        let missing_header: String = sample()
            .to_jsonl()
            .lines()
            .skip(1)
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(matches!(
            FusedGraph::parse(&missing_header),
            Err(GraphError::Format(_))
        ));
    }

    proptest! {
        #[test]
        fn random_graphs_round_trip(
            n in 1usize..8,
            edges in proptest::collection::vec((0usize..8, 0usize..8, 1e-6f64..1e6), 0..20),
        ) {
            let mut b = GraphBuilder::new();
            for i in 0..n {
                b.add_node(Node::tool(&format!("t{i}"), &format!("desc {i}")));
            }
            for (s, d, w) in edges {
                let (s, d) = (s % n, d % n);
                if s != d {
                    b.add_edge(NodeId::tool(&format!("t{s}")), NodeId::tool(&format!("t{d}")), Relation::CanUseThisToolOutput, w);
                }
            }
            let g = b.build().unwrap();
            let text = g.to_jsonl();
            let back = FusedGraph::parse(&text).unwrap();
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(back.to_jsonl(), text);
        }
    }
}
