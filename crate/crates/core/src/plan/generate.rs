use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::{
    assemble_context, retrieve_context, validate_plan, Binding, Generator, PlanArtifact, PlanError,
    PlanStep, PromptBundle, RetrievalConfig, Violation, ViolationKind,
};
use crate::extract::heuristic_match_oracle;
use crate::gateway::{Gateway, GatewayError, GatewayRequest, Role};
use crate::graph::FusedGraph;
use crate::ids::normalize_tool_id;
use crate::jsonl;
use crate::retrieval::{embed, EntryKind, StoreEntry, VectorStore};
use crate::schema::{QueryRecord, ToolCorpus, ToolRecord, ToolSchema};

pub const DEFAULT_GENERATE_PROMPT: &str = "Write an execution plan for the query using only the listed tools. \
Reply with JSON {\"steps\": [{\"tool\": id, \"arguments\": {name: {\"literal\": value} | {\"ref\": {\"step\": n, \"field\": output_field}}}, \"depends_on\": [n]}]}. \
Steps are numbered from 1 and may only reference earlier steps.";

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub budget: usize,
    pub max_attempts: usize,
    /// Require a graph edge behind every cross-step reference.
    pub strict: bool,
    pub max_in_flight: usize,
    pub instruction: String,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            budget: super::DEFAULT_BUDGET,
            max_attempts: 3,
            strict: false,
            max_in_flight: 4,
            instruction: DEFAULT_GENERATE_PROMPT.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassagePayload {
    pub id: String,
    pub text: String,
}

/// Body of a `generate` request. `attempt` and `previous_violations` are
/// only present on retries, so first attempts fingerprint identically
/// regardless of the retry policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratePayload {
    pub instruction: String,
    pub query_id: String,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub previous_violations: Vec<String>,
    pub triplets: Vec<String>,
    pub tools: Vec<ToolRecord>,
    pub passages: Vec<PassagePayload>,
}

impl GeneratePayload {
    /// Tool schemas carried by the payload, in prompt order.
    pub fn schemas(&self) -> Result<Vec<ToolSchema>, String> {
        self.tools
            .iter()
            .cloned()
            .map(|r| r.into_schema(0).map_err(|e| e.to_string()))
            .collect()
    }
}

pub fn generate_request(
    bundle: &PromptBundle,
    config: &GenerationConfig,
    attempt: usize,
    previous: &[Violation],
) -> GatewayRequest {
    let payload = GeneratePayload {
        instruction: config.instruction.clone(),
        query_id: bundle.query_id.clone(),
        query: bundle.query.clone(),
        attempt: (attempt > 1).then_some(attempt),
        previous_violations: if attempt > 1 {
            previous.iter().map(|v| v.message.clone()).collect()
        } else {
            Vec::new()
        },
        triplets: bundle.triplets.iter().map(|t| t.text.clone()).collect(),
        tools: bundle.tools.iter().map(ToolSchema::to_record).collect(),
        passages: bundle
            .passages
            .iter()
            .map(|p| PassagePayload {
                id: p.id.clone(),
                text: p.text.clone(),
            })
            .collect(),
    };
    GatewayRequest::new(Role::Generate, jsonl::to_line(&payload))
}

#[derive(Serialize, Deserialize)]
struct PlanResponse {
    steps: Vec<RawStep>,
}

#[derive(Serialize, Deserialize)]
struct RawStep {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step_index: Option<usize>,
    #[serde(alias = "tool_id")]
    tool: String,
    #[serde(default, alias = "argument_bindings")]
    arguments: BTreeMap<String, Binding>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    depends_on: BTreeSet<usize>,
}

/// Parses generator output into plan steps. Surrounding prose or code
/// fences around the JSON object are tolerated. `depends_on` is widened to
/// include every step referenced by a binding.
pub fn parse_plan_response(text: &str) -> Result<Vec<PlanStep>, Violation> {
    let malformed = |detail: String| {
        Violation::new(
            ViolationKind::Malformed,
            None,
            format!("malformed plan: {detail}"),
        )
    };
    let (Some(start), Some(end)) = (text.find('{'), text.rfind('}')) else {
        return Err(malformed("no JSON object in response".into()));
    };
    if end < start {
        return Err(malformed("no JSON object in response".into()));
    }
    let parsed: PlanResponse =
        serde_json::from_str(&text[start..=end]).map_err(|e| malformed(e.to_string()))?;
    Ok(parsed
        .steps
        .into_iter()
        .enumerate()
        .map(|(pos, raw)| {
            let tool_id = normalize_tool_id(&raw.tool).unwrap_or_else(|_| raw.tool.clone());
            let mut depends_on = raw.depends_on;
            for b in raw.arguments.values() {
                if let Binding::Ref { step, .. } = b {
                    depends_on.insert(*step);
                }
            }
            PlanStep {
                step_index: raw.step_index.unwrap_or(pos + 1),
                tool_id,
                argument_bindings: raw.arguments,
                depends_on,
            }
        })
        .collect())
}

/// Asks the gateway for a plan and validates it, retrying with the
/// violations attached up to `max_attempts` times. In replay mode a missing
/// fixture for a retry ends the retries instead of failing the query with a
/// gateway error.
pub fn generate_plan(
    bundle: &PromptBundle,
    gateway: &Gateway,
    tools: &ToolCorpus,
    graph: Option<&FusedGraph>,
    config: &GenerationConfig,
) -> Result<PlanArtifact, PlanError> {
    let strict_graph = if config.strict { graph } else { None };
    let mut violations = Vec::new();
    let mut attempts = 0;
    for attempt in 1..=config.max_attempts.max(1) {
        let request = generate_request(bundle, config, attempt, &violations);
        let text = match gateway.complete(&request) {
            Ok(t) => t,
            Err(GatewayError::MissingFixture { .. }) if attempt > 1 => break,
            Err(e) => return Err(e.into()),
        };
        attempts = attempt;
        match parse_plan_response(&text) {
            Ok(steps) => {
                let artifact = PlanArtifact {
                    query_id: bundle.query_id.clone(),
                    query: bundle.query.clone(),
                    steps,
                    supporting_passage_ids: bundle.passages.iter().map(|p| p.id.clone()).collect(),
                    subgraph_fingerprint: bundle.subgraph_fingerprint.clone(),
                    generator: Generator::from(gateway.mode()),
                };
                violations = validate_plan(&artifact, tools, strict_graph);
                if violations.is_empty() {
                    return Ok(artifact);
                }
            }
            Err(v) => violations = vec![v],
        }
        debug!(query = %bundle.query_id, attempt, "plan rejected: {}", super::join_violations(&violations));
    }
    Err(PlanError::GenerationRejected {
        query_id: bundle.query_id.clone(),
        attempts,
        violations,
    })
}

const STUB_MAX_STEPS: usize = 4;

/// Rule-based planner: starts from the top-ranked tool, extends backwards
/// and forwards along exact name+type field matches between the offered
/// tools, and wires every matched argument to the latest earlier producer.
pub(crate) fn stub_generate(payload: &str) -> Result<String, String> {
    let p: GeneratePayload = serde_json::from_str(payload).map_err(|e| e.to_string())?;
    let schemas = p.schemas()?;
    let Some(first) = schemas.first() else {
        return Err("no tools offered".into());
    };
    let linked = |a: &ToolSchema, b: &ToolSchema| !heuristic_match_oracle(a, b).is_empty();

    let mut chain: Vec<&ToolSchema> = vec![first];
    while chain.len() < STUB_MAX_STEPS {
        let head = chain[0];
        match schemas
            .iter()
            .find(|t| !chain.iter().any(|c| c.tool_id == t.tool_id) && linked(t, head))
        {
            Some(t) => chain.insert(0, t),
            None => break,
        }
    }
    while chain.len() < STUB_MAX_STEPS {
        let tail = chain[chain.len() - 1];
        match schemas
            .iter()
            .find(|t| !chain.iter().any(|c| c.tool_id == t.tool_id) && linked(tail, t))
        {
            Some(t) => chain.push(t),
            None => break,
        }
    }
    Ok(chain_plan_response(&chain))
}

/// Plan response running `chain` in order. Each argument is bound to the
/// latest earlier step producing a matching field, else to a placeholder
/// literal if required.
pub fn chain_plan_response(chain: &[&ToolSchema]) -> String {
    let mut steps = Vec::with_capacity(chain.len());
    for (pos, tool) in chain.iter().enumerate() {
        let mut arguments = BTreeMap::new();
        for (j, earlier) in chain[..pos].iter().enumerate().rev() {
            for c in heuristic_match_oracle(earlier, tool) {
                arguments.entry(c.input_argument).or_insert(Binding::Ref {
                    step: j + 1,
                    field: c.output_field,
                });
            }
        }
        for arg in tool.arguments.iter().filter(|a| a.required) {
            arguments.entry(arg.name.clone()).or_insert_with(|| {
                Binding::Literal(serde_json::Value::String(format!("<{}>", arg.name)))
            });
        }
        steps.push(RawStep {
            step_index: None,
            tool: tool.tool_id.clone(),
            arguments,
            depends_on: BTreeSet::new(),
        });
    }
    jsonl::to_line(&PlanResponse { steps })
}

/// Embeds the artifact's query text and inserts it with kind `artifact`
/// under the next `artifact-NNNNNN` id. The step summary and the serialized
/// artifact travel in the entry metadata.
pub fn store_artifact(
    store: &mut VectorStore,
    artifact: &PlanArtifact,
    gateway: &Gateway,
) -> Result<String, PlanError> {
    let id = format!("artifact-{:06}", store.count_kind(EntryKind::Artifact) + 1);
    let vector = embed(&artifact.query, gateway).map_err(crate::retrieval::RetrievalError::from)?;
    let metadata = BTreeMap::from([
        ("query_id".to_string(), artifact.query_id.clone()),
        ("summary".to_string(), artifact.summary()),
        ("artifact".to_string(), artifact.to_line()),
    ]);
    store
        .insert(
            id.clone(),
            StoreEntry {
                vector: vector.values,
                kind: EntryKind::Artifact,
                metadata,
            },
        )
        .map_err(PlanError::StoreWrite)?;
    Ok(id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Rejected,
    Gateway,
    Retrieval,
}

impl PlanError {
    pub fn failure_kind(&self) -> FailureKind {
        use crate::retrieval::{EmbedError, RetrievalError};
        match self {
            PlanError::GenerationRejected { .. } => FailureKind::Rejected,
            PlanError::Gateway(_)
            | PlanError::Retrieval(RetrievalError::Embed(EmbedError::Provider(_))) => {
                FailureKind::Gateway
            }
            _ => FailureKind::Retrieval,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationFailure {
    pub query_id: String,
    pub kind: FailureKind,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationRun {
    /// Validated artifacts in query order.
    pub artifacts: Vec<PlanArtifact>,
    pub failures: Vec<GenerationFailure>,
}

/// Retrieval, context assembly and generation for every query, with up to
/// `max_in_flight` queries in flight. Per-query failures are collected, not
/// propagated.
pub fn generate_for_queries(
    queries: &[QueryRecord],
    graph: &FusedGraph,
    store: &VectorStore,
    tools: &ToolCorpus,
    gateway: &Gateway,
    retrieval: &RetrievalConfig,
    config: &GenerationConfig,
) -> GenerationRun {
    let results = crate::par::bounded_map(queries, config.max_in_flight, |q| {
        let ctx = retrieve_context(&q.text, graph, store, gateway, retrieval)?;
        let bundle = assemble_context(
            q,
            &ctx.subgraph,
            &ctx.node_scores,
            &ctx.passages,
            tools,
            config.budget,
        )?;
        generate_plan(&bundle, gateway, tools, Some(graph), config)
    });
    let mut run = GenerationRun::default();
    for (q, r) in queries.iter().zip(results) {
        match r {
            Ok(a) => run.artifacts.push(a),
            Err(e) => {
                warn!(query = %q.query_id, "{e}");
                let violations = match &e {
                    PlanError::GenerationRejected { violations, .. } => violations.clone(),
                    _ => Vec::new(),
                };
                let kind = e.failure_kind();
                run.failures.push(GenerationFailure {
                    query_id: q.query_id.clone(),
                    kind,
                    message: e.to_string(),
                    violations,
                });
            }
        }
    }
    run
}
