//! Stage implementations. Every function reads its inputs from the resolved
//! config, writes its outputs, and returns the summary line.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use toolweave::eval::{
    evaluate_plans, run_ablation, score_dependencies, AblationInputs, AblationReport, EvalConfig,
    DEFAULT_JUDGE_PROMPT,
};
use toolweave::extract::{
    dependencies_to_jsonl, load_dependencies, run_extraction, ExtractionConfig, Prompts,
};
use toolweave::gateway::{FixtureFile, Gateway, Mode, UreqTransport};
use toolweave::graph::{
    build_tool_graph, ingest_document_graph, personalized_pagerank, FusedGraph, GatewayExtractor,
    NodeId,
};
use toolweave::plan::{
    artifacts_to_jsonl, load_artifacts, save_artifacts, store_artifact, FailureKind,
    GenerationConfig, GenerationFailure, DEFAULT_GENERATE_PROMPT,
};
use toolweave::retrieval::{index_graph, EntryKind, VectorStore};
use toolweave::schema::{
    documents_to_jsonl, load_documents, load_gold_dependencies, load_queries, load_tool_corpus,
    queries_to_jsonl, retain_valid_gold_plans, sample_records, Level, QueryRecord, ToolCorpus,
};
use toolweave::synth::{self, CorpusSpec};

use crate::config::{input, output, PipelineConfig};
use crate::error::CliError;
use crate::summary::Summary;

pub const CONFIG_FILE: &str = "toolweave.toml";
pub const FIXTURES_FILE: &str = "fixtures.jsonl";
pub const DEPENDENCY_REPORT: &str = "dependency_report.jsonl";
pub const PLAN_REPORT: &str = "plan_report.jsonl";
pub const ABLATION_REPORT: &str = "ablation_report.jsonl";
pub const EXTRACTION_FAILURES: &str = "extraction_failures.jsonl";
pub const GENERATION_FAILURES: &str = "generation_failures.jsonl";

fn write(path: &Path, content: &str) -> Result<(), CliError> {
    toolweave::write_text(path, content).map_err(|e| CliError::io(path, e))
}

fn jsonl<T: Serialize>(records: &[T]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

/// Writes `name` into the reports directory when one is configured.
fn write_report(
    cfg: &PipelineConfig,
    name: &str,
    content: &str,
) -> Result<Option<std::path::PathBuf>, CliError> {
    match &cfg.paths.reports {
        Some(dir) => {
            let path = dir.join(name);
            write(&path, content)?;
            Ok(Some(path))
        }
        None => Ok(None),
    }
}

pub fn make_gateway(cfg: &PipelineConfig) -> Result<Gateway, CliError> {
    match cfg.mode()? {
        Mode::Stub => Ok(Gateway::stub()),
        Mode::Replay => Ok(Gateway::replay(FixtureFile::load(input(
            "paths.fixtures",
            &cfg.paths.fixtures,
        )?)?)),
        Mode::Live => {
            let gw = Gateway::live(cfg.live_config(), Arc::new(UreqTransport))?;
            if cfg.gateway.record {
                output("paths.fixtures", &cfg.paths.fixtures)?;
                return Ok(gw.with_recording());
            }
            Ok(gw)
        }
    }
}

/// Merges whatever a recording gateway captured into the fixture file.
pub fn save_recording(cfg: &PipelineConfig, gw: &Gateway) -> Result<usize, CliError> {
    let Some(recorded) = gw.recorded() else {
        return Ok(0);
    };
    let path = output("paths.fixtures", &cfg.paths.fixtures)?;
    let mut file = if path.exists() {
        FixtureFile::load(path)?
    } else {
        FixtureFile::new()
    };
    let added = file.merge(recorded)?;
    file.save(path)?;
    Ok(added)
}

/// Runs `f` with the configured gateway. Recorded responses are saved even
/// when `f` fails, so a partial live run is not lost.
pub fn with_gateway<T>(
    cfg: &PipelineConfig,
    f: impl FnOnce(&Gateway) -> Result<T, CliError>,
) -> Result<T, CliError> {
    let gw = make_gateway(cfg)?;
    let result = f(&gw);
    save_recording(cfg, &gw)?;
    result
}

fn load_tools(cfg: &PipelineConfig) -> Result<ToolCorpus, CliError> {
    Ok(load_tool_corpus(input("paths.tools", &cfg.paths.tools)?)?)
}

fn load_graph(field: &str, path: &Option<std::path::PathBuf>) -> Result<FusedGraph, CliError> {
    Ok(FusedGraph::load(input(field, path)?)?)
}

/// Level filter, seeded sample, then the gold-plan filter when tools are known.
fn select_queries(
    cfg: &PipelineConfig,
    tools: Option<&ToolCorpus>,
) -> Result<(Vec<QueryRecord>, usize), CliError> {
    let mut queries = load_queries(input("paths.queries", &cfg.paths.queries)?)?;
    if let Some(level) = &cfg.queries.level {
        let level: Level = level.parse()?;
        queries.retain(|q| q.level == level);
    }
    if let Some(n) = cfg.queries.sample {
        queries = sample_records(queries, n, cfg.queries.seed)?;
    }
    match tools {
        Some(tools) => {
            let (kept, report) = retain_valid_gold_plans(queries, tools);
            Ok((kept, report.dropped()))
        }
        None => Ok((queries, 0)),
    }
}

fn extraction_config(cfg: &PipelineConfig) -> Result<ExtractionConfig, CliError> {
    let pair_blocking = cfg
        .extraction
        .blocking
        .as_deref()
        .map(str::parse)
        .transpose()
        .map_err(|m| CliError::Config {
            field: "extraction.blocking".into(),
            message: m,
        })?;
    let d = Prompts::default();
    Ok(ExtractionConfig {
        pair_blocking,
        max_in_flight: cfg.extraction.max_in_flight,
        judge_enabled: cfg.extraction.judge,
        prompts: Prompts {
            propose: cfg.prompts.propose.clone().unwrap_or(d.propose),
            judge: cfg.prompts.judge.clone().unwrap_or(d.judge),
        },
    })
}

fn generation_config(cfg: &PipelineConfig) -> GenerationConfig {
    let g = &cfg.generation;
    GenerationConfig {
        budget: g.budget,
        max_attempts: g.max_attempts,
        strict: g.strict,
        max_in_flight: g.max_in_flight,
        instruction: cfg
            .prompts
            .generate
            .clone()
            .unwrap_or_else(|| DEFAULT_GENERATE_PROMPT.into()),
    }
}

fn eval_config(cfg: &PipelineConfig) -> EvalConfig {
    EvalConfig {
        judge_instruction: cfg
            .prompts
            .plan_judge
            .clone()
            .unwrap_or_else(|| DEFAULT_JUDGE_PROMPT.into()),
        max_in_flight: cfg.evaluation.max_in_flight,
    }
}

pub fn ingest_tools(cfg: &PipelineConfig, out: Option<&Path>) -> Result<Summary, CliError> {
    let tools = load_tools(cfg)?;
    let mut s = Summary::ok("ingest-tools").with("tools", tools.len());
    let mut queries = None;
    if cfg.paths.queries.is_some() {
        let (q, dropped) = select_queries(cfg, Some(&tools))?;
        s.set("queries", q.len());
        s.set("gold_dropped", dropped);
        queries = Some(q);
    }
    let mut docs = None;
    if cfg.paths.docs.is_some() {
        let d = load_documents(input("paths.docs", &cfg.paths.docs)?)?;
        s.set("docs", d.len());
        docs = Some(d);
    }
    if let Some(dir) = out {
        write(&dir.join(synth::TOOLS_FILE), &tools.to_jsonl())?;
        if let Some(q) = &queries {
            write(&dir.join(synth::QUERIES_FILE), &queries_to_jsonl(q))?;
        }
        if let Some(d) = &docs {
            write(&dir.join(synth::DOCS_FILE), &documents_to_jsonl(d))?;
        }
        s.set("out", dir.display());
    }
    Ok(s)
}

pub fn extract_deps(cfg: &PipelineConfig, gw: &Gateway) -> Result<Summary, CliError> {
    let tools = load_tools(cfg)?;
    let out = output("paths.dependencies", &cfg.paths.dependencies)?;
    let gold = match &cfg.paths.gold_dependencies {
        Some(_) => Some(load_gold_dependencies(input(
            "paths.gold_dependencies",
            &cfg.paths.gold_dependencies,
        )?)?),
        None => None,
    };
    let run = run_extraction(tools.tools(), &extraction_config(cfg)?, gw)?;
    write(out, &dependencies_to_jsonl(&run.dependencies))?;
    write_report(cfg, EXTRACTION_FAILURES, &jsonl(&run.failures))?;
    let st = &run.stats;
    let mut s = Summary::ok("extract-deps")
        .with("tools", tools.len())
        .with("pairs", st.pairs_examined)
        .with("proposals", st.proposals)
        .with("accepted", st.accepted)
        .with("rejected", st.rejected)
        .with("failed", st.failed_pairs);
    if let Some(gold) = gold {
        let report = score_dependencies(&run.accepted_pairs(), &gold);
        write_report(cfg, DEPENDENCY_REPORT, &(report.to_line() + "\n"))?;
        s.set("precision", report.precision);
        s.set("recall", report.recall);
    }
    if let Some(first) = run.failures.first() {
        return Err(CliError::Gateway(format!(
            "{} pair(s) failed, first {} -> {}: {}",
            run.failures.len(),
            first.source_tool,
            first.target_tool,
            first.error
        )));
    }
    s.set("out", out.display());
    Ok(s)
}

pub fn build_graph(cfg: &PipelineConfig) -> Result<Summary, CliError> {
    let tools = load_tools(cfg)?;
    let deps = load_dependencies(input("paths.dependencies", &cfg.paths.dependencies)?)?;
    let out = output("paths.tool_graph", &cfg.paths.tool_graph)?;
    let graph = build_tool_graph(tools.tools(), &deps)?;
    graph.save(out)?;
    Ok(Summary::ok("build-graph")
        .with("nodes", graph.node_count())
        .with("edges", graph.edge_count())
        .with("out", out.display()))
}

pub fn ingest_docs(cfg: &PipelineConfig, gw: &Gateway) -> Result<Summary, CliError> {
    let docs = load_documents(input("paths.docs", &cfg.paths.docs)?)?;
    let out = output("paths.doc_graph", &cfg.paths.doc_graph)?;
    let mut extractor = GatewayExtractor::new(gw);
    if let Some(p) = &cfg.prompts.extract {
        extractor.instruction = p.clone();
    }
    let graph = ingest_document_graph(&docs, &extractor)?;
    graph.save(out)?;
    Ok(Summary::ok("ingest-docs")
        .with("docs", docs.len())
        .with("nodes", graph.node_count())
        .with("edges", graph.edge_count())
        .with("out", out.display()))
}

/// Without a document graph the fused graph is the tool graph.
pub fn fuse(cfg: &PipelineConfig) -> Result<Summary, CliError> {
    let tool_graph = load_graph("paths.tool_graph", &cfg.paths.tool_graph)?;
    let doc_graph = match &cfg.paths.doc_graph {
        Some(_) => load_graph("paths.doc_graph", &cfg.paths.doc_graph)?,
        None => FusedGraph::empty(),
    };
    let out = output("paths.graph", &cfg.paths.graph)?;
    let graph = toolweave::graph::fuse(&tool_graph, &doc_graph)?;
    graph.save(out)?;
    Ok(Summary::ok("fuse")
        .with("nodes", graph.node_count())
        .with("edges", graph.edge_count())
        .with("out", out.display()))
}

pub fn index(cfg: &PipelineConfig, gw: &Gateway) -> Result<Summary, CliError> {
    let graph = load_graph("paths.graph", &cfg.paths.graph)?;
    let out = output("paths.store", &cfg.paths.store)?;
    let store = index_graph(&graph, gw)?;
    store.save(out)?;
    Ok(Summary::ok("index")
        .with("triplets", store.count_kind(EntryKind::Triplet))
        .with("passages", store.count_kind(EntryKind::Passage))
        .with("dims", store.dims())
        .with("out", out.display()))
}

/// Parses `id[:mass],...`. A trailing `:x` is a mass only when `x` is a
/// number, so `tool:get_order` is an id with mass 1. Masses are normalized.
pub fn parse_seeds(raw: &str) -> Result<BTreeMap<NodeId, f64>, CliError> {
    let mut seeds: BTreeMap<NodeId, f64> = BTreeMap::new();
    for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (id, mass) = match item.rsplit_once(':') {
            Some((id, m)) if m.trim().parse::<f64>().is_ok() => {
                (id.trim(), m.trim().parse::<f64>().unwrap())
            }
            _ => (item, 1.0),
        };
        if !(mass.is_finite() && mass >= 0.0) {
            return Err(CliError::Validation(format!(
                "seed {id}: mass must be a non-negative number, got {mass}"
            )));
        }
        let node = NodeId::parse(id).ok_or_else(|| CliError::UnknownSeedNode(id.to_string()))?;
        *seeds.entry(node).or_insert(0.0) += mass;
    }
    let total: f64 = seeds.values().sum();
    if seeds.is_empty() || total <= 0.0 {
        return Err(CliError::Validation(
            "--seeds needs at least one seed with positive mass".into(),
        ));
    }
    for m in seeds.values_mut() {
        *m /= total;
    }
    Ok(seeds)
}

#[derive(Serialize)]
struct RankedNode<'a> {
    rank: usize,
    node: &'a str,
    score: f64,
}

pub fn ppr(cfg: &PipelineConfig, seeds: &str, out: Option<&Path>) -> Result<Summary, CliError> {
    let graph = load_graph("paths.graph", &cfg.paths.graph)?;
    let seeds = parse_seeds(seeds)?;
    let result = personalized_pagerank(&graph, &seeds, &cfg.ppr_config()?)?;
    let ranked: Vec<RankedNode> = result
        .ranking()
        .into_iter()
        .take(cfg.retrieval.top_n)
        .enumerate()
        .map(|(r, i)| RankedNode {
            rank: r + 1,
            node: graph.nodes()[i].id.as_str(),
            score: result.scores[i],
        })
        .collect();
    let text = jsonl(&ranked);
    let mut s = Summary::ok("ppr")
        .with("nodes", graph.node_count())
        .with("seeds", seeds.len())
        .with("iterations", result.iterations)
        .with("converged", result.converged)
        .with("residual", result.residual)
        .with("top", ranked.first().map_or("", |r| r.node));
    match out {
        Some(p) => {
            write(p, &text)?;
            s.set("out", p.display());
        }
        None => print!("{text}"),
    }
    Ok(s)
}

fn count_failures(failures: &[GenerationFailure], kind: FailureKind) -> usize {
    failures.iter().filter(|f| f.kind == kind).count()
}

fn gateway_failure(failures: &[GenerationFailure]) -> Option<CliError> {
    let first = failures.iter().find(|f| f.kind == FailureKind::Gateway)?;
    let n = count_failures(failures, FailureKind::Gateway);
    Some(CliError::Gateway(format!(
        "{n} query(s) failed at the gateway, first {}: {}",
        first.query_id, first.message
    )))
}

/// Writes the artifacts and replaces the store's artifact entries with them.
pub fn generate(cfg: &PipelineConfig, gw: &Gateway) -> Result<Summary, CliError> {
    let tools = load_tools(cfg)?;
    let (queries, dropped) = select_queries(cfg, Some(&tools))?;
    let graph = load_graph("paths.graph", &cfg.paths.graph)?;
    let store_path = input("paths.store", &cfg.paths.store)?;
    let mut store = VectorStore::load(store_path)?;
    let out = output("paths.artifacts", &cfg.paths.artifacts)?;
    let retrieval = cfg.retrieval_config()?;
    let run = toolweave::plan::generate_for_queries(
        &queries,
        &graph,
        &store,
        &tools,
        gw,
        &retrieval,
        &generation_config(cfg),
    );
    save_artifacts(out, &run.artifacts)?;
    store.remove_kind(EntryKind::Artifact);
    for a in &run.artifacts {
        store_artifact(&mut store, a, gw)?;
    }
    store.save(store_path)?;
    write_report(cfg, GENERATION_FAILURES, &jsonl(&run.failures))?;
    if let Some(e) = gateway_failure(&run.failures) {
        return Err(e);
    }
    Ok(Summary::ok("generate")
        .with("queries", queries.len())
        .with("gold_dropped", dropped)
        .with("ppr", retrieval.use_ppr)
        .with("artifacts", run.artifacts.len())
        .with(
            "rejected",
            count_failures(&run.failures, FailureKind::Rejected),
        )
        .with(
            "retrieval_failed",
            count_failures(&run.failures, FailureKind::Retrieval),
        )
        .with("out", out.display()))
}

pub fn evaluate(
    cfg: &PipelineConfig,
    gw: &Gateway,
    report: Option<&Path>,
) -> Result<Summary, CliError> {
    let artifacts = load_artifacts(input("paths.artifacts", &cfg.paths.artifacts)?)?;
    let tools = match &cfg.paths.tools {
        Some(_) => Some(load_tools(cfg)?),
        None => None,
    };
    let (queries, _) = select_queries(cfg, tools.as_ref())?;
    let r = evaluate_plans(&artifacts, &queries, gw, &eval_config(cfg))?;
    let written = match report {
        Some(p) => {
            write(p, &r.to_jsonl())?;
            Some(p.to_path_buf())
        }
        None => write_report(cfg, PLAN_REPORT, &r.to_jsonl())?,
    };
    let mut s = Summary::ok("evaluate")
        .with("queries", r.n_queries)
        .with(
            "generated",
            r.records.iter().filter(|q| q.generated).count(),
        )
        .with("matched", r.matched().len())
        .with("accuracy", r.binary_match_accuracy)
        .with("mean_judge", r.mean_judge_score);
    if let Some(p) = written {
        s.set("out", p.display());
    }
    Ok(s)
}

pub fn ablate(
    cfg: &PipelineConfig,
    gw: &Gateway,
    report: Option<&Path>,
) -> Result<Summary, CliError> {
    ablate_report(cfg, gw, report).map(|(s, _)| s)
}

fn ablate_report(
    cfg: &PipelineConfig,
    gw: &Gateway,
    report: Option<&Path>,
) -> Result<(Summary, AblationReport), CliError> {
    let tools = load_tools(cfg)?;
    let (queries, _) = select_queries(cfg, Some(&tools))?;
    let graph = load_graph("paths.graph", &cfg.paths.graph)?;
    let store = VectorStore::load(input("paths.store", &cfg.paths.store)?)?;
    let inputs = AblationInputs {
        queries: &queries,
        graph: &graph,
        store: &store,
        tools: &tools,
        gateway: gw,
    };
    let run = run_ablation(
        &inputs,
        &cfg.retrieval_config()?,
        &generation_config(cfg),
        &eval_config(cfg),
    )?;
    let r = &run.report;
    let written = match report {
        Some(p) => {
            write(p, &r.to_jsonl())?;
            Some(p.to_path_buf())
        }
        None => write_report(cfg, ABLATION_REPORT, &r.to_jsonl())?,
    };
    write_report(
        cfg,
        "ablation_ppr_artifacts.jsonl",
        &artifacts_to_jsonl(&run.with_ppr.artifacts),
    )?;
    write_report(
        cfg,
        "ablation_no_ppr_artifacts.jsonl",
        &artifacts_to_jsonl(&run.without_ppr.artifacts),
    )?;
    let mut failures = run.with_ppr.failures.clone();
    failures.extend(run.without_ppr.failures.iter().cloned());
    if let Some(e) = gateway_failure(&failures) {
        return Err(e);
    }
    let mut s = Summary::ok("ablate")
        .with("queries", r.with_ppr.n_queries)
        .with("with_ppr", r.with_ppr.binary_match_accuracy)
        .with("without_ppr", r.without_ppr.binary_match_accuracy)
        .with("delta", r.accuracy_delta)
        .with("won", r.won.len())
        .with("lost", r.lost.len());
    if let Some(p) = written {
        s.set("out", p.display());
    }
    Ok((s, run.report))
}

/// Every stage in order. Stage summaries go to `emit` as they complete.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    gw: &Gateway,
    emit: &mut dyn FnMut(&Summary),
) -> Result<Summary, CliError> {
    let mut stages = 0;
    let mut step = |s: Summary| {
        emit(&s);
        stages += 1;
    };
    step(ingest_tools(cfg, None)?);
    step(extract_deps(cfg, gw)?);
    step(build_graph(cfg)?);
    if cfg.paths.docs.is_some() {
        step(ingest_docs(cfg, gw)?);
    }
    step(fuse(cfg)?);
    step(index(cfg, gw)?);
    step(generate(cfg, gw)?);
    step(evaluate(cfg, gw, None)?);
    Ok(Summary::ok("pipeline")
        .with("mode", gw.mode())
        .with("stages", stages)
        .with("gateway_calls", gw.call_count()))
}

pub fn pipeline(cfg: &PipelineConfig, gw: &Gateway) -> Result<Summary, CliError> {
    run_pipeline(cfg, gw, &mut |s| println!("{s}"))
}

fn synth_config(spec: &CorpusSpec) -> String {
    let r = spec.retrieval_config();
    format!(
        "# Written by `toolweave synth`; paths are relative to this file.\n\
         \n\
         [paths]\n\
         tools = \"{tools}\"\n\
         docs = \"{docs}\"\n\
         queries = \"{queries}\"\n\
         gold_dependencies = \"{gold}\"\n\
         dependencies = \"out/dependencies.jsonl\"\n\
         tool_graph = \"out/tool_graph.jsonl\"\n\
         doc_graph = \"out/doc_graph.jsonl\"\n\
         graph = \"out/graph.jsonl\"\n\
         store = \"out/store.jsonl\"\n\
         artifacts = \"out/artifacts.jsonl\"\n\
         reports = \"out/reports\"\n\
         fixtures = \"{FIXTURES_FILE}\"\n\
         \n\
         [retrieval]\n\
         triplet_k = {triplet_k}\n\
         passage_k = {passage_k}\n\
         top_n = {top_n}\n\
         \n\
         [gateway]\n\
         mode = \"stub\"\n",
        tools = synth::TOOLS_FILE,
        docs = synth::DOCS_FILE,
        queries = synth::QUERIES_FILE,
        gold = synth::GOLD_DEPENDENCIES_FILE,
        triplet_k = r.triplet_k,
        passage_k = r.passage_k,
        top_n = r.top_n,
    )
}

/// Writes the corpus and its config. With `with_fixtures`, also runs the
/// pipeline and the ablation against the scripted provider and saves every
/// response it gave, so both replay offline.
pub fn synth(
    spec_path: Option<&Path>,
    out: &Path,
    with_fixtures: bool,
) -> Result<Summary, CliError> {
    let spec: CorpusSpec = match spec_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            toml::from_str(&text).map_err(|e| CliError::Config {
                field: "spec".into(),
                message: format!("{}: {}", p.display(), e.message()),
            })?
        }
        None => CorpusSpec::default(),
    };
    let corpus = synth::generate_corpus(&spec)?;
    synth::write_corpus(&corpus, out)?;
    let config_path = out.join(CONFIG_FILE);
    write(&config_path, &synth_config(&spec))?;
    let mut s = Summary::ok("synth")
        .with("tools", corpus.tools.len())
        .with("planted", corpus.gold_dependencies.len())
        .with("docs", corpus.docs.len())
        .with("queries", corpus.queries.len())
        .with("buried", corpus.scenarios.len())
        .with("attempts", corpus.attempts);
    if with_fixtures {
        let cfg = PipelineConfig::load(&config_path)?;
        let gw = synth::scripted_gateway(&corpus.queries)?;
        run_pipeline(&cfg, &gw, &mut |_| {})?;
        let (_, ab) = ablate_report(&cfg, &gw, None)?;
        let fixtures = gw.recorded().expect("scripted gateway records");
        let path = out.join(FIXTURES_FILE);
        fixtures.save(&path)?;
        s.set("fixtures", fixtures.len());
        s.set("with_ppr", ab.with_ppr.binary_match_accuracy);
        s.set("without_ppr", ab.without_ppr.binary_match_accuracy);
    }
    s.set("out", out.display());
    Ok(s)
}
