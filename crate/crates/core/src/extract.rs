//! Pairwise dependency discovery over tool schemas.
//!
//! For every candidate pair `(source, target)` the gateway is asked which
//! output payload fields of `source` can feed which input arguments of
//! `target` (propose), and each surviving proposal is then accepted or
//! rejected by a second call (judge). Rejections are kept for audit.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::gateway::{Gateway, GatewayError, GatewayRequest, Mode, Role};
use crate::ids::{normalize_tool_id, tokens};
use crate::jsonl;
use crate::schema::{ToolRecord, ToolSchema};

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("need at least 2 tools to form pairs, got {count}")]
    TooFewTools { count: usize },
    #[error("gateway failure on pair {source_tool} -> {target_tool}: {error}")]
    Gateway {
        source_tool: String,
        target_tool: String,
        #[source]
        error: GatewayError,
    },
    #[error("malformed dependency record at {0}")]
    MalformedRecord(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyCandidate {
    pub source_tool: String,
    pub target_tool: String,
    pub output_field: String,
    pub input_argument: String,
    pub rationale: String,
    pub confidence: f64,
}

impl DependencyCandidate {
    fn key(&self) -> (&str, &str, &str, &str) {
        (
            &self.source_tool,
            &self.target_tool,
            &self.output_field,
            &self.input_argument,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Llm,
    Heuristic,
    Fixture,
}

impl From<Mode> for Provenance {
    fn from(mode: Mode) -> Self {
        match mode {
            Mode::Live => Provenance::Llm,
            Mode::Replay => Provenance::Fixture,
            Mode::Stub => Provenance::Heuristic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDependency {
    #[serde(flatten)]
    pub candidate: DependencyCandidate,
    pub verdict: Verdict,
    pub judge_rationale: String,
    pub provenance: Provenance,
}

impl ToolDependency {
    pub fn is_accepted(&self) -> bool {
        self.verdict == Verdict::Accepted
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairBlocking {
    AllPairs,
    FieldOverlap,
}

impl PairBlocking {
    /// `field_overlap` above 200 tools, `all_pairs` otherwise.
    pub fn default_for(tool_count: usize) -> Self {
        if tool_count > 200 {
            PairBlocking::FieldOverlap
        } else {
            PairBlocking::AllPairs
        }
    }
}

impl std::str::FromStr for PairBlocking {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" | "all_pairs" => Ok(PairBlocking::AllPairs),
            "overlap" | "field_overlap" => Ok(PairBlocking::FieldOverlap),
            other => Err(format!(
                "unknown blocking {other:?} (expected all or overlap)"
            )),
        }
    }
}

impl fmt::Display for PairBlocking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairBlocking::AllPairs => "all",
            PairBlocking::FieldOverlap => "overlap",
        })
    }
}

/// Instruction text sent with each request. Part of the request
/// fingerprint, so changing it invalidates recorded fixtures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompts {
    pub propose: String,
    pub judge: String,
}

impl Default for Prompts {
    fn default() -> Self {
        Self {
            propose: "Given the source tool's output payload and the target tool's input arguments, list every \
                      output field of the source that can be passed as an input argument of the target. Answer \
                      with JSON {\"dependencies\": [{\"output_field\", \"input_argument\", \"rationale\", \
                      \"confidence\"}]}."
                .into(),
            judge: "Decide whether the proposed dependency is valid for this domain: the source output field must \
                    be usable as the target input argument. Answer `accept` or `reject` followed by a short reason."
                .into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExtractionConfig {
    /// `None` picks [`PairBlocking::default_for`] the corpus size.
    pub pair_blocking: Option<PairBlocking>,
    pub max_in_flight: usize,
    pub judge_enabled: bool,
    pub prompts: Prompts,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            pair_blocking: None,
            max_in_flight: 4,
            judge_enabled: true,
            prompts: Prompts::default(),
        }
    }
}

/// Ordered candidate pairs, sorted by `(source, target)` tool id.
pub fn enumerate_candidate_pairs(
    tools: &[ToolSchema],
    blocking: PairBlocking,
) -> Result<Vec<(&ToolSchema, &ToolSchema)>, ExtractError> {
    if tools.len() < 2 {
        return Err(ExtractError::TooFewTools { count: tools.len() });
    }
    let mut sorted: Vec<&ToolSchema> = tools.iter().collect();
    sorted.sort_by(|a, b| a.tool_id.cmp(&b.tool_id));

    let payload_tokens: Vec<HashSet<String>> = sorted
        .iter()
        .map(|t| {
            t.output_payload
                .iter()
                .flat_map(|f| tokens(&f.name))
                .collect()
        })
        .collect();
    let argument_tokens: Vec<HashSet<String>> = sorted
        .iter()
        .map(|t| {
            t.arguments
                .iter()
                .flat_map(|a| tokens(&a.name).chain(tokens(&a.description)))
                .collect()
        })
        .collect();

    let mut pairs = Vec::new();
    for (i, src) in sorted.iter().enumerate() {
        for (j, dst) in sorted.iter().enumerate() {
            if i == j {
                continue;
            }
            let keep = match blocking {
                PairBlocking::AllPairs => true,
                PairBlocking::FieldOverlap => !payload_tokens[i].is_disjoint(&argument_tokens[j]),
            };
            if keep {
                pairs.push((*src, *dst));
            }
        }
    }
    Ok(pairs)
}

/// Deterministic stand-in for the proposal step: one candidate per
/// (payload field, argument) whose normalized names are equal and whose type
/// tags are compatible.
pub fn heuristic_match_oracle(
    source: &ToolSchema,
    target: &ToolSchema,
) -> Vec<DependencyCandidate> {
    if source.tool_id == target.tool_id {
        return Vec::new();
    }
    let mut out = Vec::new();
    for field in &source.output_payload {
        let Ok(field_key) = normalize_tool_id(&field.name) else {
            continue;
        };
        for arg in &target.arguments {
            if normalize_tool_id(&arg.name).ok().as_deref() != Some(field_key.as_str()) {
                continue;
            }
            if field.type_tag.compatible(arg.type_tag) {
                out.push(DependencyCandidate {
                    source_tool: source.tool_id.clone(),
                    target_tool: target.tool_id.clone(),
                    output_field: field.name.clone(),
                    input_argument: arg.name.clone(),
                    rationale: format!(
                        "{} output {} matches argument {} ({})",
                        source.tool_id, field.name, arg.name, field.type_tag
                    ),
                    confidence: 1.0,
                });
            }
        }
    }
    out.sort_by(|a, b| a.key().cmp(&b.key()));
    out
}

#[derive(Serialize, Deserialize)]
struct ProposePayload {
    instruction: String,
    source: ToolRecord,
    target: ToolRecord,
}

#[derive(Serialize, Deserialize)]
struct JudgePayload {
    instruction: String,
    candidate: DependencyCandidate,
    source: ToolRecord,
    target: ToolRecord,
}

#[derive(Serialize, Deserialize)]
struct ProposalResponse {
    dependencies: Vec<Proposal>,
}

#[derive(Serialize, Deserialize)]
struct Proposal {
    output_field: String,
    input_argument: String,
    #[serde(default)]
    rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    confidence: Option<f64>,
}

pub fn propose_request(
    source: &ToolSchema,
    target: &ToolSchema,
    prompts: &Prompts,
) -> GatewayRequest {
    let payload = ProposePayload {
        instruction: prompts.propose.clone(),
        source: source.to_record(),
        target: target.to_record(),
    };
    GatewayRequest::new(Role::Propose, jsonl::to_line(&payload))
}

pub fn judge_request(
    candidate: &DependencyCandidate,
    source: &ToolSchema,
    target: &ToolSchema,
    prompts: &Prompts,
) -> GatewayRequest {
    let payload = JudgePayload {
        instruction: prompts.judge.clone(),
        candidate: candidate.clone(),
        source: source.to_record(),
        target: target.to_record(),
    };
    GatewayRequest::new(Role::Judge, jsonl::to_line(&payload))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProposalOutcome {
    pub candidates: Vec<DependencyCandidate>,
    /// Proposals naming a field or argument absent from the schemas.
    pub discarded: usize,
    /// 1 when the gateway output could not be parsed at all.
    pub malformed: usize,
}

pub fn propose_dependencies(
    source: &ToolSchema,
    target: &ToolSchema,
    gateway: &Gateway,
    prompts: &Prompts,
) -> Result<ProposalOutcome, ExtractError> {
    let request = propose_request(source, target, prompts);
    let raw = gateway
        .complete(&request)
        .map_err(|error| ExtractError::Gateway {
            source_tool: source.tool_id.clone(),
            target_tool: target.tool_id.clone(),
            error,
        })?;
    let mut outcome = ProposalOutcome::default();
    let Ok(parsed) = serde_json::from_str::<ProposalResponse>(raw.trim()) else {
        debug!(source = %source.tool_id, target = %target.tool_id, "unparseable proposal");
        outcome.malformed = 1;
        return Ok(outcome);
    };
    let mut seen = BTreeSet::new();
    for p in parsed.dependencies {
        if source.payload_field(&p.output_field).is_none()
            || target.argument(&p.input_argument).is_none()
        {
            outcome.discarded += 1;
            continue;
        }
        if !seen.insert((p.output_field.clone(), p.input_argument.clone())) {
            continue;
        }
        outcome.candidates.push(DependencyCandidate {
            source_tool: source.tool_id.clone(),
            target_tool: target.tool_id.clone(),
            output_field: p.output_field,
            input_argument: p.input_argument,
            rationale: p.rationale,
            confidence: p.confidence.unwrap_or(1.0).clamp(0.0, 1.0),
        });
    }
    if outcome.discarded > 0 {
        warn!(source = %source.tool_id, target = %target.tool_id, discarded = outcome.discarded, "discarded proposals naming unknown fields");
    }
    Ok(outcome)
}

#[derive(Deserialize)]
struct VerdictJson {
    verdict: String,
    #[serde(default)]
    rationale: String,
}

fn parse_verdict(raw: &str) -> Option<(Verdict, String)> {
    let text = raw.trim();
    let (word, rationale) = if text.starts_with('{') {
        let v: VerdictJson = serde_json::from_str(text).ok()?;
        (v.verdict.to_ascii_lowercase(), v.rationale)
    } else {
        let end = text
            .find(|c: char| !c.is_ascii_alphabetic())
            .unwrap_or(text.len());
        let rest = text[end..]
            .trim_start_matches(|c: char| c == ':' || c == '.' || c == '-' || c.is_whitespace());
        (text[..end].to_ascii_lowercase(), rest.to_string())
    };
    let verdict = match word.as_str() {
        "accept" | "accepted" | "yes" => Verdict::Accepted,
        "reject" | "rejected" | "no" => Verdict::Rejected,
        _ => return None,
    };
    Some((verdict, rationale))
}

/// Result of one judge call. `malformed` marks an unparseable verdict, which
/// is recorded as a rejection.
#[derive(Debug, Clone, PartialEq)]
pub struct Judgement {
    pub dependency: ToolDependency,
    pub malformed: bool,
}

pub fn judge_dependency(
    candidate: &DependencyCandidate,
    source: &ToolSchema,
    target: &ToolSchema,
    gateway: &Gateway,
    prompts: &Prompts,
) -> Result<Judgement, ExtractError> {
    let request = judge_request(candidate, source, target, prompts);
    let raw = gateway
        .complete(&request)
        .map_err(|error| ExtractError::Gateway {
            source_tool: source.tool_id.clone(),
            target_tool: target.tool_id.clone(),
            error,
        })?;
    let provenance = Provenance::from(gateway.mode());
    let (verdict, judge_rationale, malformed) = match parse_verdict(&raw) {
        Some((v, r)) => (v, r, false),
        None => (
            Verdict::Rejected,
            format!("malformed verdict: {}", raw.trim()),
            true,
        ),
    };
    Ok(Judgement {
        dependency: ToolDependency {
            candidate: candidate.clone(),
            verdict,
            judge_rationale,
            provenance,
        },
        malformed,
    })
}

pub(crate) fn stub_propose(payload: &str) -> Result<String, String> {
    let p: ProposePayload = serde_json::from_str(payload).map_err(|e| e.to_string())?;
    let source = p.source.into_schema(0).map_err(|e| e.to_string())?;
    let target = p.target.into_schema(0).map_err(|e| e.to_string())?;
    let dependencies = heuristic_match_oracle(&source, &target)
        .into_iter()
        .map(|c| Proposal {
            output_field: c.output_field,
            input_argument: c.input_argument,
            rationale: c.rationale,
            confidence: Some(c.confidence),
        })
        .collect();
    Ok(jsonl::to_line(&ProposalResponse { dependencies }))
}

pub(crate) fn stub_judge(payload: &str) -> Result<String, String> {
    let p: JudgePayload = serde_json::from_str(payload).map_err(|e| e.to_string())?;
    let source = p.source.into_schema(0).map_err(|e| e.to_string())?;
    let target = p.target.into_schema(0).map_err(|e| e.to_string())?;
    let c = &p.candidate;
    let (Some(field), Some(arg)) = (
        source.payload_field(&c.output_field),
        target.argument(&c.input_argument),
    ) else {
        return Ok("reject: field or argument not in schema".into());
    };
    if normalize_tool_id(&field.name).ok() != normalize_tool_id(&arg.name).ok() {
        return Ok(format!(
            "reject: name mismatch {} vs {}",
            field.name, arg.name
        ));
    }
    if !field.type_tag.compatible(arg.type_tag) {
        return Ok(format!(
            "reject: type mismatch {} -> {}",
            field.type_tag, arg.type_tag
        ));
    }
    Ok("accept".into())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExtractionStats {
    pub pairs_examined: usize,
    pub proposals: usize,
    pub discarded_proposals: usize,
    pub malformed_proposals: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub malformed_verdicts: usize,
    pub failed_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairFailure {
    pub source_tool: String,
    pub target_tool: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionRun {
    /// Accepted and rejected dependencies in canonical order.
    pub dependencies: Vec<ToolDependency>,
    pub stats: ExtractionStats,
    pub failures: Vec<PairFailure>,
}

impl ExtractionRun {
    pub fn accepted(&self) -> impl Iterator<Item = &ToolDependency> {
        self.dependencies.iter().filter(|d| d.is_accepted())
    }

    pub fn accepted_pairs(&self) -> BTreeSet<(String, String)> {
        self.accepted()
            .map(|d| {
                (
                    d.candidate.source_tool.clone(),
                    d.candidate.target_tool.clone(),
                )
            })
            .collect()
    }
}

#[derive(Default)]
struct PairOutcome {
    dependencies: Vec<ToolDependency>,
    proposals: usize,
    discarded: usize,
    malformed_proposals: usize,
    malformed_verdicts: usize,
}

fn process_pair(
    source: &ToolSchema,
    target: &ToolSchema,
    config: &ExtractionConfig,
    gateway: &Gateway,
) -> Result<PairOutcome, ExtractError> {
    let proposal = propose_dependencies(source, target, gateway, &config.prompts)?;
    let mut out = PairOutcome {
        proposals: proposal.candidates.len(),
        discarded: proposal.discarded,
        malformed_proposals: proposal.malformed,
        ..PairOutcome::default()
    };
    for candidate in proposal.candidates {
        if config.judge_enabled {
            let j = judge_dependency(&candidate, source, target, gateway, &config.prompts)?;
            out.malformed_verdicts += usize::from(j.malformed);
            out.dependencies.push(j.dependency);
        } else {
            out.dependencies.push(ToolDependency {
                candidate,
                verdict: Verdict::Accepted,
                judge_rationale: "judge disabled".into(),
                provenance: Provenance::from(gateway.mode()),
            });
        }
    }
    Ok(out)
}

/// Runs propose-then-judge over every enumerated pair with up to
/// `max_in_flight` concurrent pairs. Output order is canonical regardless of
/// completion order; failed pairs are reported and skipped.
pub fn run_extraction(
    tools: &[ToolSchema],
    config: &ExtractionConfig,
    gateway: &Gateway,
) -> Result<ExtractionRun, ExtractError> {
    let blocking = config
        .pair_blocking
        .unwrap_or_else(|| PairBlocking::default_for(tools.len()));
    let pairs = enumerate_candidate_pairs(tools, blocking)?;
    let outcomes = crate::par::bounded_map(&pairs, config.max_in_flight, |(src, dst)| {
        process_pair(src, dst, config, gateway)
    });

    let mut stats = ExtractionStats {
        pairs_examined: pairs.len(),
        ..ExtractionStats::default()
    };
    let mut dependencies = Vec::new();
    let mut failures = Vec::new();
    for ((src, dst), outcome) in pairs.iter().zip(outcomes) {
        match outcome {
            Ok(o) => {
                stats.proposals += o.proposals;
                stats.discarded_proposals += o.discarded;
                stats.malformed_proposals += o.malformed_proposals;
                stats.malformed_verdicts += o.malformed_verdicts;
                dependencies.extend(o.dependencies);
            }
            Err(e) => {
                warn!("{e}");
                stats.failed_pairs += 1;
                failures.push(PairFailure {
                    source_tool: src.tool_id.clone(),
                    target_tool: dst.tool_id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    dependencies.sort_by(|a, b| a.candidate.key().cmp(&b.candidate.key()));
    stats.accepted = dependencies.iter().filter(|d| d.is_accepted()).count();
    stats.rejected = dependencies.len() - stats.accepted;
    Ok(ExtractionRun {
        dependencies,
        stats,
        failures,
    })
}

pub fn dependencies_to_jsonl<'a>(deps: impl IntoIterator<Item = &'a ToolDependency>) -> String {
    jsonl::join_lines(deps.into_iter().map(jsonl::to_line))
}

pub fn parse_dependencies(content: &str) -> Result<Vec<ToolDependency>, ExtractError> {
    jsonl::lines(content)
        .map(|l| jsonl::parse_line(&l).map_err(ExtractError::MalformedRecord))
        .collect()
}

pub fn load_dependencies(path: &Path) -> Result<Vec<ToolDependency>, ExtractError> {
    let content = std::fs::read_to_string(path).map_err(|source| ExtractError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dependencies(&content)
}
