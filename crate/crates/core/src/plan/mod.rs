//! Query-tailored plan generation.
//!
//! Per query: retrieve a subgraph ([`retrieve_context`]), pack it into a
//! budgeted prompt ([`assemble_context`]), ask the gateway for a plan
//! ([`generate_plan`]), check it ([`validate_plan`]) and persist accepted
//! artifacts into the vector store ([`store_artifact`]).

mod context;
mod generate;
mod retrieve;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::{GatewayError, Mode};
use crate::graph::{FusedGraph, GraphError};
use crate::jsonl;
use crate::retrieval::{RetrievalError, StoreError};

pub use context::{
    assemble_context, token_count, PassageContext, PromptBundle, ScoredTriplet, TruncationReport,
    DEFAULT_BUDGET,
};
pub(crate) use generate::stub_generate;
pub use generate::{
    chain_plan_response, generate_for_queries, generate_plan, generate_request,
    parse_plan_response, store_artifact, FailureKind, GeneratePayload, GenerationConfig,
    GenerationFailure, GenerationRun, PassagePayload, DEFAULT_GENERATE_PROMPT,
};
pub use retrieve::{retrieve_context, QueryContext, RetrievalConfig};
pub use validate::{validate_plan, Violation, ViolationKind};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("retrieved subgraph is empty")]
    EmptySubgraph,
    #[error("query alone needs {needed} tokens but the budget is {budget}")]
    BudgetTooSmall { needed: usize, budget: usize },
    #[error(
        "plan for {query_id} rejected after {attempts} attempt(s): {}",
        join_violations(violations)
    )]
    GenerationRejected {
        query_id: String,
        attempts: usize,
        violations: Vec<Violation>,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("cannot store artifact: {0}")]
    StoreWrite(StoreError),
    #[error("malformed artifact record: {0}")]
    Format(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.message.as_str())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Value fed into a tool argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    Literal(serde_json::Value),
    /// Output payload field `field` of the earlier step `step`.
    Ref {
        step: usize,
        field: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub step_index: usize,
    pub tool_id: String,
    #[serde(default)]
    pub argument_bindings: BTreeMap<String, Binding>,
    #[serde(default)]
    pub depends_on: BTreeSet<usize>,
}

impl PlanStep {
    /// `(argument, referenced step, referenced field)` for every cross-step binding.
    pub fn references(&self) -> impl Iterator<Item = (&str, usize, &str)> {
        self.argument_bindings
            .iter()
            .filter_map(|(arg, b)| match b {
                Binding::Ref { step, field } => Some((arg.as_str(), *step, field.as_str())),
                Binding::Literal(_) => None,
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Live,
    Replay,
    Stub,
}

impl From<Mode> for Generator {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Live => Generator::Live,
            Mode::Replay => Generator::Replay,
            Mode::Stub => Generator::Stub,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanArtifact {
    pub query_id: String,
    pub query: String,
    pub steps: Vec<PlanStep>,
    #[serde(default)]
    pub supporting_passage_ids: Vec<String>,
    pub subgraph_fingerprint: String,
    pub generator: Generator,
}

impl PlanArtifact {
    pub fn tool_ids(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.tool_id.as_str()).collect()
    }

    /// Tool-level `(source, target)` pairs implied by `depends_on`.
    pub fn wiring_pairs(&self) -> BTreeSet<(String, String)> {
        wiring_pairs(&self.steps)
    }

    /// One-line human summary, e.g. `1:get_order -> 2:cancel_order(order_id<-1.order_id)`.
    pub fn summary(&self) -> String {
        self.steps
            .iter()
            .map(|s| {
                let refs: Vec<String> = s
                    .references()
                    .map(|(a, st, f)| format!("{a}<-{st}.{f}"))
                    .collect();
                if refs.is_empty() {
                    format!("{}:{}", s.step_index, s.tool_id)
                } else {
                    format!("{}:{}({})", s.step_index, s.tool_id, refs.join(","))
                }
            })
            .collect::<Vec<_>>()
            .join(" -> ")
    }

    pub fn to_line(&self) -> String {
        jsonl::to_line(self)
    }
}

impl fmt::Display for PlanArtifact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.query_id, self.summary())
    }
}

/// Tool-level `(source, target)` pairs implied by the steps' `depends_on`.
pub fn wiring_pairs(steps: &[PlanStep]) -> BTreeSet<(String, String)> {
    let by_index: BTreeMap<usize, &str> = steps
        .iter()
        .map(|s| (s.step_index, s.tool_id.as_str()))
        .collect();
    let mut out = BTreeSet::new();
    for step in steps {
        for d in &step.depends_on {
            if let Some(src) = by_index.get(d) {
                out.insert((src.to_string(), step.tool_id.clone()));
            }
        }
    }
    out
}

/// Hex SHA-256 of the sorted node ids, newline separated.
pub fn subgraph_fingerprint(graph: &FusedGraph) -> String {
    let mut h = Sha256::new();
    for n in graph.nodes() {
        h.update(n.id.as_str().as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

pub fn artifacts_to_jsonl(artifacts: &[PlanArtifact]) -> String {
    jsonl::join_lines(artifacts.iter().map(PlanArtifact::to_line))
}

pub fn parse_artifacts(content: &str) -> Result<Vec<PlanArtifact>, PlanError> {
    jsonl::lines(content)
        .map(|l| jsonl::parse_line(&l).map_err(PlanError::Format))
        .collect()
}

pub fn load_artifacts(path: &Path) -> Result<Vec<PlanArtifact>, PlanError> {
    let content = std::fs::read_to_string(path).map_err(|source| PlanError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_artifacts(&content)
}

pub fn save_artifacts(path: &Path, artifacts: &[PlanArtifact]) -> Result<(), PlanError> {
    jsonl::write_text(path, &artifacts_to_jsonl(artifacts)).map_err(|source| PlanError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::schema::{parse_tool_corpus, ToolCorpus};

    pub fn order_tools() -> ToolCorpus {
        parse_tool_corpus(concat!(
            r#"{"name":"Get Order","description":"Fetch an order by id","arguments":[{"name":"order_id","type":"string","required":true}],"output_payload":[{"name":"order_id","type":"string"},{"name":"status","type":"string"},{"name":"total","type":"number"}]}"#,
            "\n",
            r#"{"name":"Cancel Order","description":"Cancel an open order","arguments":[{"name":"order_id","type":"string","required":true},{"name":"reason","type":"string"}],"output_payload":[{"name":"refund_id","type":"string"}]}"#,
            "\n",
            r#"{"name":"Lookup Customer","description":"Find a customer","arguments":[{"name":"email","type":"string","required":true}],"output_payload":[{"name":"customer_id","type":"integer"}]}"#,
            "\n",
        ))
        .unwrap()
    }

    pub fn two_step() -> PlanArtifact {
        PlanArtifact {
            query_id: "q1".into(),
            query: "cancel my order A17".into(),
            steps: vec![
                PlanStep {
                    step_index: 1,
                    tool_id: "get_order".into(),
                    argument_bindings: BTreeMap::from([(
                        "order_id".into(),
                        Binding::Literal("A17".into()),
                    )]),
                    depends_on: BTreeSet::new(),
                },
                PlanStep {
                    step_index: 2,
                    tool_id: "cancel_order".into(),
                    argument_bindings: BTreeMap::from([(
                        "order_id".into(),
                        Binding::Ref {
                            step: 1,
                            field: "order_id".into(),
                        },
                    )]),
                    depends_on: BTreeSet::from([1]),
                },
            ],
            supporting_passage_ids: vec!["passage:sop#0".into()],
            subgraph_fingerprint: "00".into(),
            generator: Generator::Replay,
        }
    }
}
