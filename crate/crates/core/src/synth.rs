//! Deterministic synthetic tool ecosystems: tools with planted field-level
//! dependencies, distractor fields that match by name but not by type,
//! documents that mention some tools, and queries with gold plans.
//!
//! Every corpus contains at least one buried-tool scenario: three anchor
//! tools that share vocabulary with the query, plus one tool from an
//! unrelated vocabulary that the gold plan needs and that is connected to
//! the anchors only by a dependency edge. The generator checks each
//! scenario with the stub embedder and redraws the corpus if embedding-only
//! retrieval finds the buried tool or PPR misses it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{heuristic_match_oracle, Provenance, ToolDependency, Verdict};
use crate::gateway::{
    Gateway, GatewayError, GatewayRequest, HttpResponse, LiveConfig, Role, Transport,
    TransportError,
};
use crate::graph::{
    build_tool_graph, fuse, ingest_document_graph, FusedGraph, GraphError, HeuristicExtractor,
    NodeId,
};
use crate::ids::normalize_tool_id;
use crate::jsonl;
use crate::plan::{
    chain_plan_response, retrieve_context, GeneratePayload, PlanError, RetrievalConfig,
};
use crate::retrieval::{index_graph, stub_embedding, RetrievalError};
use crate::schema::{
    documents_to_jsonl, queries_to_jsonl, ArgumentSpec, DocumentRecord, GoldDependency, GoldPlan,
    GoldStep, Level, PayloadField, QueryRecord, ToolCorpus, ToolSchema, TypeTag,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub n_tools: usize,
    pub n_planted_dependencies: usize,
    pub n_docs: usize,
    /// Fraction of documents that mention at least one tool.
    pub doc_mention_rate: f64,
    /// Distractor field pairs per tool.
    pub distractor_rate: f64,
    pub rng_seed: u64,
    pub n_queries: usize,
    /// Buried-tool scenarios; each uses four tools and four planted dependencies.
    pub n_buried: usize,
    /// Triplets retrieved per query when checking buried scenarios.
    pub probe_triplet_k: usize,
    /// PPR cut-off when checking buried scenarios.
    pub probe_top_n: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_tools: 50,
            n_planted_dependencies: 40,
            n_docs: 20,
            doc_mention_rate: 0.5,
            distractor_rate: 0.1,
            rng_seed: 7,
            n_queries: 10,
            n_buried: 2,
            probe_triplet_k: 3,
            probe_top_n: 12,
        }
    }
}

impl CorpusSpec {
    /// Retrieval settings under which the buried scenarios are guaranteed.
    pub fn retrieval_config(&self) -> RetrievalConfig {
        RetrievalConfig {
            triplet_k: self.probe_triplet_k,
            top_n: self.probe_top_n,
            ..RetrievalConfig::default()
        }
    }

    fn check(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InfeasibleSpec(m));
        if self.n_buried == 0 {
            return bad("at least one buried-tool scenario is required".into());
        }
        if self.n_buried > THEMES.len() {
            return bad(format!(
                "at most {} buried scenarios are available",
                THEMES.len()
            ));
        }
        let scenario_tools = SCENARIO_TOOLS * self.n_buried;
        if self.n_tools < scenario_tools {
            return bad(format!(
                "{} buried scenarios need {scenario_tools} tools, spec has {}",
                self.n_buried, self.n_tools
            ));
        }
        if self.n_planted_dependencies > self.n_tools * self.n_tools.saturating_sub(1) {
            return bad("more planted dependencies than ordered tool pairs".into());
        }
        if self.n_planted_dependencies < SCENARIO_DEPS * self.n_buried {
            return bad(format!(
                "buried scenarios alone plant {} dependencies",
                SCENARIO_DEPS * self.n_buried
            ));
        }
        let regular = self.n_tools - scenario_tools;
        let regular_deps = self.n_planted_dependencies - SCENARIO_DEPS * self.n_buried;
        if regular_deps > regular * regular.saturating_sub(1) {
            return bad(format!(
                "{regular_deps} dependencies do not fit among {regular} regular tools"
            ));
        }
        if self.n_queries < self.n_buried {
            return bad("fewer queries than buried scenarios".into());
        }
        let regular_queries = self.n_queries - self.n_buried;
        if regular_queries > 0 && (regular < 2 || regular_deps == 0) {
            return bad(
                "regular queries need at least two regular tools and one regular dependency".into(),
            );
        }
        for (name, r) in [
            ("doc_mention_rate", self.doc_mention_rate),
            ("distractor_rate", self.distractor_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} must be within [0, 1], got {r}"));
            }
        }
        if self.n_docs > 0 && regular == 0 && self.doc_mention_rate > 0.0 {
            return bad("documents can only mention regular tools".into());
        }
        if self.probe_triplet_k == 0 || self.probe_top_n == 0 {
            return bad("probe_triplet_k and probe_top_n must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible corpus spec: {0}")]
    InfeasibleSpec(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuriedScenario {
    pub query_id: String,
    pub anchors: Vec<String>,
    pub buried_tool: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub tools: ToolCorpus,
    /// Planted `(source, target)` tool pairs.
    pub gold_dependencies: BTreeSet<(String, String)>,
    pub docs: Vec<DocumentRecord>,
    pub queries: Vec<QueryRecord>,
    pub scenarios: Vec<BuriedScenario>,
    /// Draws needed until every buried scenario verified.
    pub attempts: usize,
}

const SCENARIO_TOOLS: usize = 4;
const SCENARIO_DEPS: usize = 4;
const MAX_ATTEMPTS: usize = 16;

struct Theme {
    anchors: [(&'static str, &'static str); 3],
    buried: (&'static str, &'static str),
    query: &'static str,
}

const THEMES: [Theme; 6] = [
    Theme {
        anchors: [
            (
                "Locate Satellite",
                "Locate a satellite and report its orbit elements",
            ),
            (
                "Point Antenna",
                "Point the ground antenna along the satellite orbit",
            ),
            (
                "Open Uplink",
                "Open an uplink window through the pointed antenna",
            ),
        ],
        buried: (
            "Backlog Check",
            "Verify pending work queue capacity before commitments",
        ),
        query: "Locate the satellite, point the antenna along its orbit and open an uplink window",
    },
    Theme {
        anchors: [
            (
                "Survey Vineyard",
                "Survey vineyard rows and estimate grape ripeness",
            ),
            (
                "Schedule Harvest",
                "Schedule the grape harvest for ripe vineyard rows",
            ),
            (
                "Fill Barrels",
                "Fill cellar barrels with the harvested grapes",
            ),
        ],
        buried: ("Quota Audit", "Audit quarterly quota usage against limits"),
        query: "Survey the vineyard grapes, schedule the harvest and fill the cellar barrels",
    },
    Theme {
        anchors: [
            ("Measure Snowpack", "Measure snowpack depth on the glacier"),
            (
                "Model Meltwater",
                "Model glacier meltwater from snowpack depth",
            ),
            (
                "Issue Avalanche Bulletin",
                "Issue an avalanche bulletin from meltwater models",
            ),
        ],
        buried: (
            "Compliance Signoff",
            "Obtain compliance signoff from the review board",
        ),
        query: "Measure glacier snowpack, model the meltwater and issue an avalanche bulletin",
    },
    Theme {
        anchors: [
            ("Read Coolant", "Read reactor coolant temperature"),
            (
                "Balance Turbine",
                "Balance turbine load using coolant temperature",
            ),
            (
                "Dispatch Megawatts",
                "Dispatch turbine megawatts to the grid",
            ),
        ],
        buried: (
            "Staffing Roster",
            "Confirm shift staffing roster availability",
        ),
        query: "Read the reactor coolant, balance the turbine and dispatch megawatts to the grid",
    },
    Theme {
        anchors: [
            (
                "Find Manuscript",
                "Find a manuscript in the archive catalogue",
            ),
            ("Digitize Folio", "Digitize manuscript folio pages"),
            (
                "Publish Curator Note",
                "Publish a curator note for digitized folios",
            ),
        ],
        buried: ("Budget Hold", "Place a budget hold on expense accounts"),
        query: "Find the manuscript in the archive, digitize each folio and publish a curator note",
    },
    Theme {
        anchors: [
            (
                "Sample Salinity",
                "Sample lagoon salinity near the coral reef",
            ),
            (
                "Assess Coral",
                "Assess coral reef health from salinity samples",
            ),
            ("Log Plankton", "Log plankton counts for the assessed reef"),
        ],
        buried: (
            "Freight Slot Booking",
            "Book a freight slot with the carrier",
        ),
        query: "Sample the lagoon salinity, assess the coral reef and log plankton counts",
    },
];

const VERBS: [&str; 12] = [
    "Fetch", "Create", "Update", "Cancel", "List", "Validate", "Export", "Merge", "Approve",
    "Track", "Sync", "Price",
];
const NOUNS: [&str; 19] = [
    "Invoice",
    "Customer",
    "Shipment",
    "Refund",
    "Product",
    "Cart",
    "Payment",
    "Coupon",
    "Warehouse",
    "Supplier",
    "Review",
    "Ticket",
    "Account",
    "Address",
    "Subscription",
    "Discount",
    "Receipt",
    "Parcel",
    "Loyalty",
];
const ENTITIES: [&str; 8] = [
    "Returns Desk",
    "Finance Team",
    "Warehouse Policy",
    "Shipping Portal",
    "Billing Office",
    "Fraud Review",
    "Partner Program",
    "Pricing Committee",
];
const PLANT_TYPES: [TypeTag; 4] = [
    TypeTag::String,
    TypeTag::Integer,
    TypeTag::Number,
    TypeTag::Boolean,
];

fn pick(rng: &mut ChaCha8Rng, n: usize) -> usize {
    rng.random_range(0..n as u64) as usize
}

fn shuffle<T>(rng: &mut ChaCha8Rng, v: &mut [T]) {
    for i in (1..v.len()).rev() {
        let j = pick(rng, i + 1);
        v.swap(i, j);
    }
}

struct ToolDraft {
    name: String,
    id: String,
    description: String,
    arguments: Vec<ArgumentSpec>,
    outputs: Vec<PayloadField>,
}

impl ToolDraft {
    fn new(name: &str, description: &str) -> Self {
        let id = normalize_tool_id(name).expect("generated names are non-empty");
        Self {
            arguments: vec![ArgumentSpec {
                name: format!("{id}_filter"),
                type_tag: TypeTag::String,
                required: false,
                description: "Optional free-text filter".into(),
            }],
            outputs: vec![PayloadField {
                name: format!("{id}_summary"),
                type_tag: TypeTag::String,
                description: "Human-readable summary".into(),
            }],
            name: name.to_string(),
            id,
            description: description.to_string(),
        }
    }

    fn into_schema(self) -> ToolSchema {
        ToolSchema {
            tool_id: self.id,
            name: self.name,
            description: self.description,
            arguments: self.arguments,
            output_payload: self.outputs,
        }
    }
}

struct Draft {
    tools: Vec<ToolDraft>,
    planted: Vec<(usize, usize)>,
    docs: Vec<DocumentRecord>,
    queries: Vec<QueryRecord>,
    scenarios: Vec<BuriedScenario>,
}

fn plant(
    tools: &mut [ToolDraft],
    planted: &mut Vec<(usize, usize)>,
    src: usize,
    dst: usize,
    ty: TypeTag,
) {
    let k = planted.len() + 1;
    let field = format!("{}_ref_{k}", tools[src].id);
    let producer = tools[src].name.clone();
    tools[src].outputs.push(PayloadField {
        name: field.clone(),
        type_tag: ty,
        description: format!("Reference produced by {producer}"),
    });
    tools[dst].arguments.push(ArgumentSpec {
        name: field,
        type_tag: ty,
        required: true,
        description: format!("Reference from {producer}"),
    });
    planted.push((src, dst));
}

fn gold_plan(
    tool_idx: &[usize],
    tools: &[ToolDraft],
    planted: &BTreeSet<(usize, usize)>,
) -> GoldPlan {
    let steps = tool_idx
        .iter()
        .map(|&i| GoldStep {
            tool_id: tools[i].id.clone(),
            arguments: BTreeMap::new(),
        })
        .collect();
    let mut gold_dependencies = Vec::new();
    for (a, &i) in tool_idx.iter().enumerate() {
        for &j in &tool_idx[a + 1..] {
            if planted.contains(&(i, j)) {
                gold_dependencies.push(GoldDependency {
                    source: tools[i].id.clone(),
                    target: tools[j].id.clone(),
                });
            }
        }
    }
    GoldPlan {
        steps,
        gold_dependencies,
    }
}

fn lower_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_lowercase().chain(c).collect(),
        None => String::new(),
    }
}

fn draw(spec: &CorpusSpec, rng: &mut ChaCha8Rng) -> Result<Draft, SynthError> {
    let mut theme_order: Vec<usize> = (0..THEMES.len()).collect();
    shuffle(rng, &mut theme_order);

    let n_regular = spec.n_tools - SCENARIO_TOOLS * spec.n_buried;
    let mut combos: Vec<(usize, usize)> = (0..VERBS.len())
        .flat_map(|v| (0..NOUNS.len()).map(move |n| (v, n)))
        .collect();
    shuffle(rng, &mut combos);
    let mut tools: Vec<ToolDraft> = Vec::with_capacity(spec.n_tools);
    let mut nouns_of = Vec::with_capacity(n_regular);
    for i in 0..n_regular {
        let (v, n) = combos[i % combos.len()];
        let round = i / combos.len();
        let name = if round == 0 {
            format!("{} {}", VERBS[v], NOUNS[n])
        } else {
            format!("{} {} V{}", VERBS[v], NOUNS[n], round + 1)
        };
        let mut other = pick(rng, NOUNS.len() - 1);
        if other >= n {
            other += 1;
        }
        let description = format!(
            "{} {} details from the {} service",
            VERBS[v],
            NOUNS[n].to_lowercase(),
            NOUNS[other].to_lowercase()
        );
        tools.push(ToolDraft::new(&name, &description));
        nouns_of.push(n);
    }

    let mut planted: Vec<(usize, usize)> = Vec::new();
    let mut scenario_idx = Vec::new();
    for &t in theme_order.iter().take(spec.n_buried) {
        let theme = &THEMES[t];
        let base = tools.len();
        for (name, desc) in theme.anchors {
            tools.push(ToolDraft::new(name, desc));
        }
        tools.push(ToolDraft::new(theme.buried.0, theme.buried.1));
        for (s, d) in [(0, 1), (1, 2), (0, 2), (2, 3)] {
            let ty = PLANT_TYPES[pick(rng, PLANT_TYPES.len())];
            plant(&mut tools, &mut planted, base + s, base + d, ty);
        }
        scenario_idx.push((t, base));
    }

    let regular_budget = spec.n_planted_dependencies - SCENARIO_DEPS * spec.n_buried;
    let mut regular_planted = 0;
    let mut chains: Vec<Vec<usize>> = Vec::new();
    for _ in 0..spec.n_queries - spec.n_buried {
        let room = regular_budget - regular_planted;
        let mut len = 2 + pick(rng, 2);
        if len - 1 > room {
            len = 2;
        }
        let mut pool: Vec<usize> = (0..n_regular).collect();
        shuffle(rng, &mut pool);
        let chain: Vec<usize> = pool.into_iter().take(len.min(n_regular)).collect();
        let new_pairs = chain
            .windows(2)
            .filter(|w| !planted.contains(&(w[0], w[1])))
            .count();
        if new_pairs > room {
            return Err(SynthError::InfeasibleSpec(
                "not enough planted dependencies for the regular query chains".into(),
            ));
        }
        for w in chain.windows(2) {
            if !planted.contains(&(w[0], w[1])) {
                let ty = PLANT_TYPES[pick(rng, PLANT_TYPES.len())];
                plant(&mut tools, &mut planted, w[0], w[1], ty);
                regular_planted += 1;
            }
        }
        chains.push(chain);
    }
    while regular_planted < regular_budget {
        let (s, d) = (pick(rng, n_regular), pick(rng, n_regular));
        if s == d || planted.contains(&(s, d)) {
            continue;
        }
        let ty = PLANT_TYPES[pick(rng, PLANT_TYPES.len())];
        plant(&mut tools, &mut planted, s, d, ty);
        regular_planted += 1;
    }

    let n_distractors = (spec.distractor_rate * spec.n_tools as f64).round() as usize;
    if n_regular >= 2 {
        for k in 1..=n_distractors {
            let s = pick(rng, n_regular);
            let mut d = pick(rng, n_regular - 1);
            if d >= s {
                d += 1;
            }
            let field = format!("{}_code_{k}", tools[s].id);
            tools[s].outputs.push(PayloadField {
                name: field.clone(),
                type_tag: TypeTag::Integer,
                description: "Numeric code".into(),
            });
            tools[d].arguments.push(ArgumentSpec {
                name: field,
                type_tag: TypeTag::Boolean,
                required: false,
                description: "Whether the code applies".into(),
            });
        }
    }

    let planted_set: BTreeSet<(usize, usize)> = planted.iter().copied().collect();
    let mut drafts: Vec<(QueryRecord, Option<BuriedScenario>)> = Vec::new();
    for chain in &chains {
        let text = chain
            .iter()
            .map(|&i| lower_first(&tools[i].description))
            .collect::<Vec<_>>()
            .join(", then ");
        let level = if chain.len() > 2 {
            Level::G2
        } else {
            Level::G1
        };
        drafts.push((
            QueryRecord {
                query_id: String::new(),
                text,
                level,
                gold_plan: Some(gold_plan(chain, &tools, &planted_set)),
            },
            None,
        ));
    }
    for &(t, base) in &scenario_idx {
        let idx = [base, base + 1, base + 2, base + 3];
        let scenario = BuriedScenario {
            query_id: String::new(),
            anchors: idx[..3].iter().map(|&i| tools[i].id.clone()).collect(),
            buried_tool: tools[base + 3].id.clone(),
        };
        drafts.push((
            QueryRecord {
                query_id: String::new(),
                text: THEMES[t].query.to_string(),
                level: Level::G3,
                gold_plan: Some(gold_plan(&idx, &tools, &planted_set)),
            },
            Some(scenario),
        ));
    }
    shuffle(rng, &mut drafts);
    let mut queries = Vec::new();
    let mut scenarios = Vec::new();
    for (i, (mut q, s)) in drafts.into_iter().enumerate() {
        q.query_id = format!("q{:03}", i + 1);
        if let Some(mut s) = s {
            s.query_id = q.query_id.clone();
            scenarios.push(s);
        }
        queries.push(q);
    }

    let docs = (0..spec.n_docs)
        .map(|i| draw_doc(i, rng, spec, &tools[..n_regular], &nouns_of))
        .collect();
    Ok(Draft {
        tools,
        planted,
        docs,
        queries,
        scenarios,
    })
}

fn draw_doc(
    i: usize,
    rng: &mut ChaCha8Rng,
    spec: &CorpusSpec,
    regular: &[ToolDraft],
    nouns_of: &[usize],
) -> DocumentRecord {
    let topic = NOUNS[pick(rng, NOUNS.len())];
    let noun = topic.to_lowercase();
    let entity = |rng: &mut ChaCha8Rng| ENTITIES[pick(rng, ENTITIES.len())];
    let mut paragraphs = Vec::new();
    for _ in 0..2 + pick(rng, 2) {
        let (e1, e2) = (entity(rng), entity(rng));
        let sentence = match pick(rng, 3) {
            0 => format!("The {e1} reviews {noun} requests before the {e2} approves them."),
            1 => format!("Every {noun} change is recorded by the {e1} and audited by the {e2}."),
            _ => format!("Escalations about a {noun} go to the {e1} first and then to the {e2}."),
        };
        paragraphs.push(sentence);
    }
    let mut referenced = Vec::new();
    if !regular.is_empty() && rng.random_bool(spec.doc_mention_rate) {
        for _ in 0..1 + pick(rng, 2) {
            let t = pick(rng, regular.len());
            let tool = &regular[t];
            let slot = pick(rng, paragraphs.len());
            let mention = format!(
                " Use {} when the {} needs {} data.",
                tool.name,
                entity(rng),
                NOUNS[nouns_of[t]].to_lowercase()
            );
            paragraphs[slot].push_str(&mention);
            if !referenced.contains(&tool.id) {
                referenced.push(tool.id.clone());
            }
        }
    }
    DocumentRecord {
        doc_id: format!("doc-{:03}", i + 1),
        title: format!("{topic} operations guide"),
        body: paragraphs.join("\n\n"),
        referenced_tools: referenced,
    }
}

fn planted_dependencies(
    tools: &ToolCorpus,
    gold: &BTreeSet<(String, String)>,
) -> Vec<ToolDependency> {
    let mut out = Vec::new();
    for (s, d) in gold {
        let (Some(src), Some(dst)) = (tools.get(s), tools.get(d)) else {
            continue;
        };
        for candidate in heuristic_match_oracle(src, dst) {
            out.push(ToolDependency {
                candidate,
                verdict: Verdict::Accepted,
                judge_rationale: "planted".into(),
                provenance: Provenance::Heuristic,
            });
        }
    }
    out
}

/// The graph the stub pipeline builds for this corpus: planted tool
/// dependencies fused with heuristically extracted document entities.
pub fn reference_graph(corpus: &SyntheticCorpus) -> Result<FusedGraph, SynthError> {
    let tool_graph = build_tool_graph(
        corpus.tools.tools(),
        &planted_dependencies(&corpus.tools, &corpus.gold_dependencies),
    )?;
    let doc_graph = ingest_document_graph(&corpus.docs, &HeuristicExtractor)?;
    Ok(fuse(&tool_graph, &doc_graph)?)
}

/// Scenarios whose buried-tool property fails under the stub embedder.
pub fn failing_scenarios(
    corpus: &SyntheticCorpus,
    retrieval: &RetrievalConfig,
) -> Result<Vec<String>, SynthError> {
    let graph = reference_graph(corpus)?;
    let gateway = Gateway::stub();
    let store = index_graph(&graph, &gateway)?;
    let mut failing = Vec::new();
    for s in &corpus.scenarios {
        let q = corpus
            .queries
            .iter()
            .find(|q| q.query_id == s.query_id)
            .expect("scenario query exists");
        let with = retrieve_context(
            &q.text,
            &graph,
            &store,
            &gateway,
            &RetrievalConfig {
                use_ppr: true,
                ..retrieval.clone()
            },
        )?;
        let without = retrieve_context(
            &q.text,
            &graph,
            &store,
            &gateway,
            &RetrievalConfig {
                use_ppr: false,
                ..retrieval.clone()
            },
        )?;
        let buried = NodeId::tool(&s.buried_tool);
        let anchors_found = s
            .anchors
            .iter()
            .all(|a| without.subgraph.contains(&NodeId::tool(a)));
        if !anchors_found || without.subgraph.contains(&buried) || !with.subgraph.contains(&buried)
        {
            failing.push(s.query_id.clone());
        }
    }
    Ok(failing)
}

fn attempt_seed(seed: u64, attempt: usize) -> u64 {
    seed ^ (attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn generate_corpus(spec: &CorpusSpec) -> Result<SyntheticCorpus, SynthError> {
    spec.check()?;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(attempt_seed(spec.rng_seed, attempt));
        let d = draw(spec, &mut rng)?;
        let gold_dependencies = d
            .planted
            .iter()
            .map(|&(s, t)| (d.tools[s].id.clone(), d.tools[t].id.clone()))
            .collect();
        let tools = ToolCorpus::new(d.tools.into_iter().map(ToolDraft::into_schema).collect())
            .map_err(|e| SynthError::InfeasibleSpec(e.to_string()))?;
        let corpus = SyntheticCorpus {
            tools,
            gold_dependencies,
            docs: d.docs,
            queries: d.queries,
            scenarios: d.scenarios,
            attempts: attempt + 1,
        };
        let failing = failing_scenarios(&corpus, &spec.retrieval_config())?;
        if failing.is_empty() {
            return Ok(corpus);
        }
        tracing::debug!(
            attempt,
            ?failing,
            "buried scenarios not separated, redrawing"
        );
    }
    Err(SynthError::InfeasibleSpec(format!(
        "buried scenarios could not be verified in {MAX_ATTEMPTS} draws"
    )))
}

pub const TOOLS_FILE: &str = "tools.jsonl";
pub const DOCS_FILE: &str = "docs.jsonl";
pub const QUERIES_FILE: &str = "queries.jsonl";
pub const GOLD_DEPENDENCIES_FILE: &str = "gold_dependencies.jsonl";
pub const SCENARIOS_FILE: &str = "scenarios.jsonl";

pub fn gold_dependencies_to_jsonl(gold: &BTreeSet<(String, String)>) -> String {
    jsonl::join_lines(gold.iter().map(|(s, t)| {
        jsonl::to_line(&GoldDependency {
            source: s.clone(),
            target: t.clone(),
        })
    }))
}

/// Writes the corpus in the formats read by the ingestion stages.
pub fn write_corpus(corpus: &SyntheticCorpus, dir: &Path) -> Result<(), SynthError> {
    let write = |name: &str, content: String| {
        let path = dir.join(name);
        jsonl::write_text(&path, &content).map_err(|source| SynthError::Io { path, source })
    };
    write(TOOLS_FILE, corpus.tools.to_jsonl())?;
    write(DOCS_FILE, documents_to_jsonl(&corpus.docs))?;
    write(QUERIES_FILE, queries_to_jsonl(&corpus.queries))?;
    write(
        GOLD_DEPENDENCIES_FILE,
        gold_dependencies_to_jsonl(&corpus.gold_dependencies),
    )?;
    write(
        SCENARIOS_FILE,
        jsonl::join_lines(corpus.scenarios.iter().map(jsonl::to_line)),
    )?;
    Ok(())
}

/// In-process provider speaking the live HTTP protocol. Plan generation
/// answers with the gold plan restricted to the tools offered in the
/// prompt (falling back to the stub planner when none are offered);
/// embeddings and every other role use the stub rules. Recording a session
/// against it yields replay fixtures whose outcome depends only on which
/// tools retrieval put in front of the generator.
pub struct ScriptedProvider {
    gold: BTreeMap<String, GoldPlan>,
    stub: Gateway,
}

impl ScriptedProvider {
    pub fn new(queries: &[QueryRecord]) -> Self {
        let gold = queries
            .iter()
            .filter_map(|q| q.gold_plan.clone().map(|g| (q.query_id.clone(), g)))
            .collect();
        Self {
            gold,
            stub: Gateway::stub(),
        }
    }

    fn generate(&self, content: &str) -> Result<String, String> {
        let payload: GeneratePayload = serde_json::from_str(content).map_err(|e| e.to_string())?;
        let offered = payload.schemas()?;
        let chain: Vec<&ToolSchema> = self
            .gold
            .get(&payload.query_id)
            .map(|g| {
                g.steps
                    .iter()
                    .filter_map(|s| offered.iter().find(|t| t.tool_id == s.tool_id))
                    .collect()
            })
            .unwrap_or_default();
        if chain.is_empty() {
            return self
                .stub
                .complete(&GatewayRequest::new(Role::Generate, content))
                .map_err(|e| e.to_string());
        }
        Ok(chain_plan_response(&chain))
    }

    fn chat(&self, body: &serde_json::Value) -> Result<String, String> {
        let content = body["messages"][0]["content"]
            .as_str()
            .ok_or("missing message content")?;
        let role: Role = serde_json::from_value(body["metadata"]["toolweave_role"].clone())
            .map_err(|e| e.to_string())?;
        if role == Role::Generate {
            return self.generate(content);
        }
        self.stub
            .complete(&GatewayRequest::new(role, content))
            .map_err(|e| e.to_string())
    }
}

impl Transport for ScriptedProvider {
    fn post_json(
        &self,
        url: &str,
        _bearer: Option<&str>,
        body: &str,
        _timeout: Duration,
    ) -> Result<HttpResponse, TransportError> {
        let reply = |status: u16, v: serde_json::Value| {
            Ok(HttpResponse {
                status,
                body: v.to_string(),
            })
        };
        let body: serde_json::Value = match serde_json::from_str(body) {
            Ok(v) => v,
            Err(e) => return reply(400, serde_json::json!({"error": e.to_string()})),
        };
        if url.ends_with("/embeddings") {
            let Some(inputs) = body["input"].as_array() else {
                return reply(400, serde_json::json!({"error": "missing input"}));
            };
            let data: Vec<serde_json::Value> =
                inputs.iter().map(|t| serde_json::json!({"embedding": stub_embedding(t.as_str().unwrap_or_default())})).collect();
            return reply(200, serde_json::json!({ "data": data }));
        }
        match self.chat(&body) {
            Ok(text) => reply(
                200,
                serde_json::json!({"choices": [{"message": {"content": text}}]}),
            ),
            Err(e) => reply(400, serde_json::json!({ "error": e })),
        }
    }
}

/// A recording live gateway backed by [`ScriptedProvider`].
pub fn scripted_gateway(queries: &[QueryRecord]) -> Result<Gateway, GatewayError> {
    let config = LiveConfig {
        endpoint: "scripted://provider".into(),
        model: "scripted".into(),
        embed_model: "stub-3gram".into(),
        api_key: Some("scripted".into()),
        requests_per_second: 0.0,
        ..LiveConfig::default()
    };
    Ok(Gateway::live(config, Arc::new(ScriptedProvider::new(queries)))?.with_recording())
}
