use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{subgraph_fingerprint, PlanError};
use crate::graph::{FusedGraph, NodeId, NodeKind, Relation};
use crate::retrieval::verbalize_triplet;
use crate::schema::{QueryRecord, ToolCorpus, ToolSchema};

pub const DEFAULT_BUDGET: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTriplet {
    pub source_tool: String,
    pub target_tool: String,
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageContext {
    pub id: String,
    pub text: String,
    pub score: f64,
}

/// Items left out because the budget ran out, per section.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub triplets_dropped: usize,
    pub tools_dropped: usize,
    pub passages_dropped: usize,
}

impl TruncationReport {
    pub fn is_empty(&self) -> bool {
        self.triplets_dropped == 0 && self.tools_dropped == 0 && self.passages_dropped == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub query_id: String,
    pub query: String,
    pub triplets: Vec<ScoredTriplet>,
    pub tools: Vec<ToolSchema>,
    pub passages: Vec<PassageContext>,
    pub budget: usize,
    pub used_tokens: usize,
    pub truncation: TruncationReport,
    pub subgraph_fingerprint: String,
}

/// Whitespace-delimited token count; the budget unit for prompts.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn score_of(scores: &BTreeMap<NodeId, f64>, id: &NodeId) -> f64 {
    scores.get(id).copied().unwrap_or(0.0)
}

/// Packs the query, then dependency triplets (by summed endpoint score),
/// then tool schemas (by node score), then passages (by retrieval score).
/// Within each section items are taken greedily in rank order and the
/// section closes at the first item that does not fit.
pub fn assemble_context(
    query: &QueryRecord,
    subgraph: &FusedGraph,
    node_scores: &BTreeMap<NodeId, f64>,
    passages: &[PassageContext],
    tools: &ToolCorpus,
    budget: usize,
) -> Result<PromptBundle, PlanError> {
    if subgraph.is_empty() {
        return Err(PlanError::EmptySubgraph);
    }
    let needed = token_count(&query.text);
    if needed > budget {
        return Err(PlanError::BudgetTooSmall { needed, budget });
    }

    let mut triplets = Vec::new();
    for edge in subgraph
        .edges()
        .iter()
        .filter(|e| e.relation == Relation::CanUseThisToolOutput)
    {
        let t = verbalize_triplet(edge, subgraph)?;
        let (Some(src), Some(dst)) = (subgraph.node(&edge.src), subgraph.node(&edge.dst)) else {
            continue;
        };
        triplets.push(ScoredTriplet {
            source_tool: src.tool_id().unwrap_or(&src.label).to_string(),
            target_tool: dst.tool_id().unwrap_or(&dst.label).to_string(),
            text: t.text,
            score: score_of(node_scores, &edge.src) + score_of(node_scores, &edge.dst),
        });
    }
    triplets.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| (&a.source_tool, &a.target_tool).cmp(&(&b.source_tool, &b.target_tool)))
    });

    let mut tool_nodes: Vec<(f64, &str)> = subgraph
        .nodes_of_kind(NodeKind::Tool)
        .filter_map(|n| n.tool_id().map(|t| (score_of(node_scores, &n.id), t)))
        .collect();
    tool_nodes.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    let mut schemas = Vec::new();
    for (_, id) in tool_nodes {
        match tools.get(id) {
            Some(s) => schemas.push(s.clone()),
            None => warn!("tool node {id} has no schema in the corpus"),
        }
    }

    let mut ranked_passages = passages.to_vec();
    ranked_passages.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));

    let mut used = needed;
    let mut truncation = TruncationReport::default();
    let triplets = take_greedy(
        triplets,
        |t| token_count(&t.text),
        budget,
        &mut used,
        &mut truncation.triplets_dropped,
    );
    let schemas = take_greedy(
        schemas,
        |s| token_count(&s.to_line()),
        budget,
        &mut used,
        &mut truncation.tools_dropped,
    );
    let passages = take_greedy(
        ranked_passages,
        |p| token_count(&p.text),
        budget,
        &mut used,
        &mut truncation.passages_dropped,
    );

    Ok(PromptBundle {
        query_id: query.query_id.clone(),
        query: query.text.clone(),
        triplets,
        tools: schemas,
        passages,
        budget,
        used_tokens: used,
        truncation,
        subgraph_fingerprint: subgraph_fingerprint(subgraph),
    })
}

fn take_greedy<T>(
    items: Vec<T>,
    cost: impl Fn(&T) -> usize,
    budget: usize,
    used: &mut usize,
    dropped: &mut usize,
) -> Vec<T> {
    let total = items.len();
    let mut kept = Vec::new();
    for item in items {
        let c = cost(&item);
        if *used + c > budget {
            break;
        }
        *used += c;
        kept.push(item);
    }
    *dropped = total - kept.len();
    kept
}
