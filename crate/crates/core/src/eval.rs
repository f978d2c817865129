//! Metrics: pair-level dependency precision/recall, plan binary match,
//! 0-2 judge scores, and the with/without-PPR ablation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError, GatewayRequest, Role};
use crate::graph::FusedGraph;
use crate::jsonl;
use crate::plan::{
    generate_for_queries, GenerationConfig, GenerationRun, PlanArtifact, PlanStep, RetrievalConfig,
};
use crate::retrieval::VectorStore;
use crate::schema::{GoldPlan, QueryRecord, ToolCorpus};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("judge returned {response:?} for {query_id}; expected an integer score 0, 1 or 2")]
    JudgeProtocol { query_id: String, response: String },
    #[error("inconsistent counts: tp={tp} predicted={predicted} gold={gold}")]
    InconsistentCounts {
        predicted: usize,
        gold: usize,
        tp: usize,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Percentage rounded to one decimal, e.g. `0.90690 -> 90.7`.
pub fn round_percent(fraction: f64) -> f64 {
    (fraction * 1000.0).round() / 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyEvalReport {
    pub predicted_count: usize,
    pub gold_count: usize,
    pub true_positive_count: usize,
    pub precision: f64,
    pub recall: f64,
}

impl DependencyEvalReport {
    pub fn from_counts(predicted: usize, gold: usize, tp: usize) -> Result<Self, EvalError> {
        if tp > predicted.min(gold) {
            return Err(EvalError::InconsistentCounts {
                predicted,
                gold,
                tp,
            });
        }
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        Ok(Self {
            predicted_count: predicted,
            gold_count: gold,
            true_positive_count: tp,
            precision: ratio(tp, predicted),
            recall: ratio(tp, gold),
        })
    }

    pub fn to_line(&self) -> String {
        jsonl::to_line(self)
    }
}

/// Matches at `(source tool, target tool)` granularity.
pub fn score_dependencies(
    predicted: &BTreeSet<(String, String)>,
    gold: &BTreeSet<(String, String)>,
) -> DependencyEvalReport {
    let tp = predicted.intersection(gold).count();
    DependencyEvalReport::from_counts(predicted.len(), gold.len(), tp)
        .expect("intersection is bounded by both sets")
}

fn tool_multiset<'a>(ids: impl Iterator<Item = &'a str>) -> BTreeMap<&'a str, usize> {
    let mut m = BTreeMap::new();
    for id in ids {
        *m.entry(id).or_insert(0) += 1;
    }
    m
}

/// Same tool multiset as the gold plan and every gold dependency pair
/// wired in the artifact.
pub fn binary_match(artifact: &PlanArtifact, gold: &GoldPlan) -> bool {
    steps_match(&artifact.steps, gold)
}

fn steps_match(steps: &[PlanStep], gold: &GoldPlan) -> bool {
    if tool_multiset(steps.iter().map(|s| s.tool_id.as_str()))
        != tool_multiset(gold.steps.iter().map(|s| s.tool_id.as_str()))
    {
        return false;
    }
    let wiring = crate::plan::wiring_pairs(steps);
    gold.gold_dependencies
        .iter()
        .all(|d| wiring.contains(&(d.source.clone(), d.target.clone())))
}

/// Offline judge: 2 on binary match, 1 if at least half of the distinct
/// gold tools appear in the artifact, else 0.
pub fn rubric_score(artifact: &PlanArtifact, gold: &GoldPlan) -> u8 {
    rubric(&artifact.steps, gold)
}

fn rubric(steps: &[PlanStep], gold: &GoldPlan) -> u8 {
    if steps_match(steps, gold) {
        return 2;
    }
    let gold_tools: BTreeSet<&str> = gold.steps.iter().map(|s| s.tool_id.as_str()).collect();
    let present: BTreeSet<&str> = steps.iter().map(|s| s.tool_id.as_str()).collect();
    let hit = gold_tools.intersection(&present).count();
    if !gold_tools.is_empty() && 2 * hit >= gold_tools.len() {
        1
    } else {
        0
    }
}

pub const DEFAULT_JUDGE_PROMPT: &str = "Compare the generated plan with the reference plan and rate how well it covers \
the reference: 2 = complete and correctly wired, 1 = partial, 0 = unrelated. Reply with the integer only.";

/// Only the plan content is sent; provenance fields would make the
/// fingerprint depend on the gateway mode that produced the artifact.
#[derive(Serialize, Deserialize)]
struct JudgePayload {
    instruction: String,
    query_id: String,
    query: String,
    steps: Vec<PlanStep>,
    gold_plan: GoldPlan,
}

pub fn plan_judge_request(
    artifact: &PlanArtifact,
    gold: &GoldPlan,
    instruction: &str,
) -> GatewayRequest {
    let payload = JudgePayload {
        instruction: instruction.to_string(),
        query_id: artifact.query_id.clone(),
        query: artifact.query.clone(),
        steps: artifact.steps.clone(),
        gold_plan: gold.clone(),
    };
    GatewayRequest::new(Role::PlanJudge, jsonl::to_line(&payload))
}

/// Accepts a bare integer or `{"score": n}`; anything else, or a value
/// outside 0..=2, is a protocol error.
pub fn parse_judge_score(text: &str) -> Option<u8> {
    let t = text.trim();
    let n: i64 = match t.parse() {
        Ok(n) => n,
        Err(_) => serde_json::from_str::<serde_json::Value>(t)
            .ok()?
            .get("score")?
            .as_i64()?,
    };
    u8::try_from(n).ok().filter(|&n| n <= 2)
}

pub fn judge_plan(
    artifact: &PlanArtifact,
    gold: &GoldPlan,
    gateway: &Gateway,
    instruction: &str,
) -> Result<u8, EvalError> {
    let response = gateway.complete(&plan_judge_request(artifact, gold, instruction))?;
    parse_judge_score(&response).ok_or_else(|| EvalError::JudgeProtocol {
        query_id: artifact.query_id.clone(),
        response,
    })
}

pub(crate) fn stub_plan_judge(payload: &str) -> Result<String, String> {
    let p: JudgePayload = serde_json::from_str(payload).map_err(|e| e.to_string())?;
    Ok(rubric(&p.steps, &p.gold_plan).to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEval {
    pub query_id: String,
    pub generated: bool,
    pub binary_match: bool,
    pub judge_score: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEvalReport {
    pub n_queries: usize,
    pub binary_match_accuracy: f64,
    pub mean_judge_score: f64,
    pub records: Vec<QueryEval>,
}

impl PlanEvalReport {
    pub fn from_records(records: Vec<QueryEval>) -> Self {
        let n = records.len();
        let (acc, mean) = if n == 0 {
            (0.0, 0.0)
        } else {
            let matched = records.iter().filter(|r| r.binary_match).count();
            let total: u32 = records.iter().map(|r| u32::from(r.judge_score)).sum();
            (matched as f64 / n as f64, f64::from(total) / n as f64)
        };
        Self {
            n_queries: n,
            binary_match_accuracy: acc,
            mean_judge_score: mean,
            records,
        }
    }

    pub fn matched(&self) -> BTreeSet<&str> {
        self.records
            .iter()
            .filter(|r| r.binary_match)
            .map(|r| r.query_id.as_str())
            .collect()
    }

    /// Summary record followed by one record per query.
    pub fn to_jsonl(&self) -> String {
        self.lines(None).join("\n") + "\n"
    }

    fn lines(&self, arm: Option<&str>) -> Vec<String> {
        let mut summary = serde_json::json!({
            "record": "summary",
            "n_queries": self.n_queries,
            "binary_match_accuracy": self.binary_match_accuracy,
            "mean_judge_score": self.mean_judge_score,
        });
        if let Some(a) = arm {
            summary["arm"] = a.into();
        }
        let mut out = vec![summary.to_string()];
        for r in &self.records {
            let mut v = serde_json::to_value(r).expect("record serializes");
            v["record"] = "query".into();
            if let Some(a) = arm {
                v["arm"] = a.into();
            }
            out.push(v.to_string());
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub judge_instruction: String,
    pub max_in_flight: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            judge_instruction: DEFAULT_JUDGE_PROMPT.into(),
            max_in_flight: 4,
        }
    }
}

/// Scores every query that has a gold plan. A query without an artifact
/// counts as a miss with score 0 and is not sent to the judge.
pub fn evaluate_plans(
    artifacts: &[PlanArtifact],
    queries: &[QueryRecord],
    gateway: &Gateway,
    config: &EvalConfig,
) -> Result<PlanEvalReport, EvalError> {
    let mut by_query: BTreeMap<&str, &PlanArtifact> = BTreeMap::new();
    for a in artifacts {
        by_query.entry(a.query_id.as_str()).or_insert(a);
    }
    let work: Vec<(&QueryRecord, &GoldPlan)> = queries
        .iter()
        .filter_map(|q| q.gold_plan.as_ref().map(|g| (q, g)))
        .collect();
    let results = crate::par::bounded_map(
        &work,
        config.max_in_flight,
        |(q, gold)| -> Result<QueryEval, EvalError> {
            let Some(a) = by_query.get(q.query_id.as_str()) else {
                return Ok(QueryEval {
                    query_id: q.query_id.clone(),
                    generated: false,
                    binary_match: false,
                    judge_score: 0,
                });
            };
            Ok(QueryEval {
                query_id: q.query_id.clone(),
                generated: true,
                binary_match: binary_match(a, gold),
                judge_score: judge_plan(a, gold, gateway, &config.judge_instruction)?,
            })
        },
    );
    Ok(PlanEvalReport::from_records(
        results.into_iter().collect::<Result<_, _>>()?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub with_ppr: PlanEvalReport,
    pub without_ppr: PlanEvalReport,
    /// `with_ppr - without_ppr` binary-match accuracy.
    pub accuracy_delta: f64,
    /// Queries matched only with PPR.
    pub won: Vec<String>,
    /// Queries matched only without PPR.
    pub lost: Vec<String>,
}

impl AblationReport {
    pub fn compare(with_ppr: PlanEvalReport, without_ppr: PlanEvalReport) -> Self {
        let (a, b) = (with_ppr.matched(), without_ppr.matched());
        let won = a.difference(&b).map(|s| s.to_string()).collect();
        let lost = b.difference(&a).map(|s| s.to_string()).collect();
        let accuracy_delta = with_ppr.binary_match_accuracy - without_ppr.binary_match_accuracy;
        Self {
            with_ppr,
            without_ppr,
            accuracy_delta,
            won,
            lost,
        }
    }

    pub fn to_jsonl(&self) -> String {
        let head = serde_json::json!({
            "record": "ablation",
            "accuracy_delta": self.accuracy_delta,
            "won": self.won,
            "lost": self.lost,
        });
        let mut lines = vec![head.to_string()];
        lines.extend(self.with_ppr.lines(Some("ppr")));
        lines.extend(self.without_ppr.lines(Some("no_ppr")));
        lines.join("\n") + "\n"
    }
}

pub struct AblationInputs<'a> {
    pub queries: &'a [QueryRecord],
    pub graph: &'a FusedGraph,
    pub store: &'a VectorStore,
    pub tools: &'a ToolCorpus,
    pub gateway: &'a Gateway,
}

#[derive(Debug, Clone)]
pub struct AblationRun {
    pub report: AblationReport,
    pub with_ppr: GenerationRun,
    pub without_ppr: GenerationRun,
}

/// Runs generation and evaluation twice, differing only in
/// `retrieval.use_ppr`.
pub fn run_ablation(
    inputs: &AblationInputs<'_>,
    retrieval: &RetrievalConfig,
    generation: &GenerationConfig,
    eval: &EvalConfig,
) -> Result<AblationRun, EvalError> {
    let arm = |use_ppr: bool| -> Result<(GenerationRun, PlanEvalReport), EvalError> {
        let cfg = RetrievalConfig {
            use_ppr,
            ..retrieval.clone()
        };
        let run = generate_for_queries(
            inputs.queries,
            inputs.graph,
            inputs.store,
            inputs.tools,
            inputs.gateway,
            &cfg,
            generation,
        );
        let report = evaluate_plans(&run.artifacts, inputs.queries, inputs.gateway, eval)?;
        Ok((run, report))
    };
    let (with_run, with_report) = arm(true)?;
    let (without_run, without_report) = arm(false)?;
    Ok(AblationRun {
        report: AblationReport::compare(with_report, without_report),
        with_ppr: with_run,
        without_ppr: without_run,
    })
}
