//! Acceptance gate. Runs every criterion, prints one `PASS`/`FAIL` line per
//! criterion and exits non-zero if any failed.
//!
//! Oracles are computed here, independently of the library: a dense LU
//! solve for PPR, the analytic two-node solution, exhaustive sorting for
//! top-k, and hand-built corrupt plans with known violation categories.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use toolweave::eval::{
    binary_match, evaluate_plans, judge_plan, plan_judge_request, round_percent,
    score_dependencies, DependencyEvalReport, EvalConfig, EvalError, DEFAULT_JUDGE_PROMPT,
};
use toolweave::extract::{run_extraction, ExtractionConfig};
use toolweave::gateway::{FixtureFile, Gateway};
use toolweave::graph::{
    personalized_pagerank, EdgeDirection, FusedGraph, GraphBuilder, Node, NodeId, PprConfig,
    Relation,
};
use toolweave::plan::{
    artifacts_to_jsonl, assemble_context, chain_plan_response, generate_plan, generate_request,
    load_artifacts, parse_artifacts, parse_plan_response, retrieve_context, GenerationConfig,
    Generator, PlanArtifact, PlanError, ViolationKind,
};
use toolweave::retrieval::{EntryKind, StoreEntry, VectorStore};
use toolweave::schema::{load_queries, load_tool_corpus, QueryRecord, ToolCorpus, ToolSchema};
use toolweave::synth::{generate_corpus, CorpusSpec};

type Outcome = Result<String, String>;
type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_toolweave")
}

fn toolweave(args: &[&str]) -> Result<String, String> {
    let out = Command::new(bin())
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    if !out.status.success() {
        return Err(format!(
            "toolweave {} exited {:?}: {}{}",
            args.join(" "),
            out.status.code(),
            stdout,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(stdout)
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

/// Shared state: a synthetic corpus with recorded fixtures and one stub
/// pipeline run, produced through the binary.
struct Workspace {
    _tmp: tempfile::TempDir,
    corpus: PathBuf,
}

impl Workspace {
    fn new() -> Result<Self, String> {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let corpus = tmp.path().join("corpus");
        toolweave(&["synth", "--out", path_str(&corpus), "--with-fixtures"])?;
        Ok(Self { _tmp: tmp, corpus })
    }

    fn config(&self) -> PathBuf {
        self.corpus.join("toolweave.toml")
    }

    fn out(&self, name: &str) -> PathBuf {
        self.corpus.join("out").join(name)
    }
}

fn tool_graph(names: &[String], edges: &[(usize, usize, f64)]) -> FusedGraph {
    let mut b = GraphBuilder::new();
    for n in names {
        b.add_node(Node::tool(n, ""));
    }
    for &(s, t, w) in edges {
        b.add_edge(
            NodeId::tool(&names[s]),
            NodeId::tool(&names[t]),
            Relation::CanUseThisToolOutput,
            w,
        );
    }
    b.build().unwrap()
}

/// Stationary distribution of the walk with restart, solved directly:
/// (I - d Pᵀ - d s 1_danglingᵀ) p = (1 - d) s.
fn dense_ppr(
    n: usize,
    edges: &[(usize, usize, f64)],
    symmetrize: bool,
    seeds: &[f64],
    d: f64,
) -> Vec<f64> {
    let mut w = DMatrix::<f64>::zeros(n, n);
    for &(s, t, x) in edges {
        w[(s, t)] += x;
        if symmetrize {
            w[(t, s)] += x;
        }
    }
    let s = DVector::from_column_slice(seeds);
    let mut a = DMatrix::<f64>::identity(n, n);
    for u in 0..n {
        let total: f64 = w.row(u).sum();
        if total == 0.0 {
            for v in 0..n {
                a[(v, u)] -= d * s[v];
            }
        } else {
            for v in 0..n {
                a[(v, u)] -= d * w[(u, v)] / total;
            }
        }
    }
    let p = a
        .lu()
        .solve(&(s * (1.0 - d)))
        .expect("restart makes the system non-singular");
    p.iter().copied().collect()
}

fn ppr_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = rng.random_range(1..=12usize);
        let names: Vec<String> = (0..n).map(|i| format!("n{i:02}")).collect();
        let mut edges = Vec::new();
        for s in 0..n {
            for t in 0..n {
                if s != t && rng.random_bool(0.3) {
                    edges.push((s, t, rng.random_range(0.1..5.0)));
                }
            }
        }
        let graph = tool_graph(&names, &edges);
        let mut masses = vec![0.0; n];
        for m in masses.iter_mut() {
            if rng.random_bool(0.4) {
                *m = rng.random_range(0.05..1.0);
            }
        }
        let pick = rng.random_range(0..n);
        masses[pick] += 0.5;
        let total: f64 = masses.iter().sum();
        masses.iter_mut().for_each(|m| *m /= total);
        let symmetrize = rng.random_bool(0.5);
        let damping = if case % 2 == 0 {
            0.85
        } else {
            rng.random_range(0.5..0.95)
        };
        let config = PprConfig {
            damping,
            max_iterations: 1000,
            edge_direction: if symmetrize {
                EdgeDirection::Symmetrize
            } else {
                EdgeDirection::AsIs
            },
            ..PprConfig::default()
        };

        let seeds: BTreeMap<NodeId, f64> = names
            .iter()
            .zip(&masses)
            .filter(|(_, &m)| m > 0.0)
            .map(|(name, &m)| (NodeId::tool(name), m))
            .collect();
        let got = personalized_pagerank(&graph, &seeds, &config)
            .map_err(|e| format!("case {case}: {e}"))?;
        let want = dense_ppr(n, &edges, symmetrize, &masses, damping);
        for (i, name) in names.iter().enumerate() {
            let g = got.score(&graph, &NodeId::tool(name)).unwrap();
            worst = worst.max((g - want[i]).abs());
        }
        ensure!(worst <= 1e-6, "case {case}: L-inf error {worst:.3e} > 1e-6");
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 5.0, "took {secs:.2}s, limit 5s");
    Ok(format!(
        "200 graphs, max L-inf error {worst:.2e}, {secs:.3}s"
    ))
}

fn ppr_closed_form() -> Outcome {
    let names = vec!["a".to_string(), "b".to_string()];
    let graph = tool_graph(&names, &[(0, 1, 1.0)]);
    let seeds = BTreeMap::from([(NodeId::tool("a"), 1.0)]);
    let mut worst = 0.0f64;
    for d in [0.5, 0.85, 0.99] {
        for dir in [EdgeDirection::AsIs, EdgeDirection::Symmetrize] {
            let cfg = PprConfig {
                damping: d,
                tolerance: 1e-14,
                max_iterations: 10_000,
                edge_direction: dir,
                ..PprConfig::default()
            };
            let r = personalized_pagerank(&graph, &seeds, &cfg).map_err(|e| e.to_string())?;
            let (pa, pb) = (
                r.score(&graph, &NodeId::tool("a")).unwrap(),
                r.score(&graph, &NodeId::tool("b")).unwrap(),
            );
            let err = (pa - 1.0 / (1.0 + d)).abs().max((pb - d / (1.0 + d)).abs());
            ensure!(
                err <= 1e-9,
                "d={d} {dir:?}: p(A)={pa} p(B)={pb}, error {err:.3e}"
            );
            worst = worst.max(err);
        }
    }
    Ok(format!(
        "d in {{0.5, 0.85, 0.99}}, both edge directions, max error {worst:.2e}"
    ))
}

fn dependency_metric_arithmetic() -> Outcome {
    let r = DependencyEvalReport::from_counts(1332, 1500, 1208).map_err(|e| e.to_string())?;
    let (p, rc) = (round_percent(r.precision), round_percent(r.recall));
    ensure!(p == 90.7 && rc == 80.5, "precision {p} recall {rc}");

    // Same counts through set scoring: 1208 shared pairs, 124 extra, 292 missed.
    let pair = |i: usize| (format!("s{i}"), format!("t{i}"));
    let predicted: BTreeSet<_> = (0..1332).map(pair).collect();
    let gold: BTreeSet<_> = (0..1208).chain(2000..2292).map(pair).collect();
    let s = score_dependencies(&predicted, &gold);
    ensure!(s == r, "set scoring gave {s:?}");
    Ok(format!(
        "precision {p}% recall {rc}% from predicted=1332 gold=1500 tp=1208"
    ))
}

fn stub_extraction_exactness() -> Outcome {
    let corpus = generate_corpus(&CorpusSpec::default()).map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for max_in_flight in [1, 8] {
        let cfg = ExtractionConfig {
            max_in_flight,
            ..ExtractionConfig::default()
        };
        let run = run_extraction(corpus.tools.tools(), &cfg, &Gateway::stub())
            .map_err(|e| e.to_string())?;
        let r = score_dependencies(&run.accepted_pairs(), &corpus.gold_dependencies);
        ensure!(
            r.precision == 1.0 && r.recall == 1.0,
            "max_in_flight={max_in_flight}: {r:?}"
        );
        runs.push(run);
    }
    ensure!(
        runs[0] == runs[1],
        "runs differ between max_in_flight 1 and 8"
    );
    Ok(format!(
        "{} planted dependencies recovered, P=R=1.0 for max_in_flight 1 and 8",
        corpus.gold_dependencies.len()
    ))
}

fn ablation_record(line: &str) -> Result<serde_json::Value, String> {
    serde_json::from_str(line).map_err(|e| e.to_string())
}

fn ablation_direction(ws: &Workspace) -> Outcome {
    let report = ws.out("reports/ablation_report.jsonl");
    let recorded = fs::read(&report).map_err(|e| e.to_string())?;
    toolweave(&[
        "ablate",
        "--config",
        path_str(&ws.config()),
        "--mode",
        "replay",
    ])?;
    let replayed = fs::read(&report).map_err(|e| e.to_string())?;
    ensure!(
        replayed == recorded,
        "replayed ablation report differs from the recorded one"
    );

    let text = String::from_utf8(replayed).map_err(|e| e.to_string())?;
    let mut acc = BTreeMap::new();
    let mut won = Vec::new();
    for line in text.lines() {
        let v = ablation_record(line)?;
        match v["record"].as_str() {
            Some("ablation") => won = v["won"].as_array().cloned().unwrap_or_default(),
            Some("summary") => {
                acc.insert(
                    v["arm"].as_str().unwrap_or_default().to_string(),
                    v["binary_match_accuracy"].as_f64().unwrap_or(f64::NAN),
                );
            }
            _ => {}
        }
    }
    let (with, without) = (acc.get("ppr").copied(), acc.get("no_ppr").copied());
    let (Some(with), Some(without)) = (with, without) else {
        return Err(format!("report lacks arm summaries: {acc:?}"));
    };
    ensure!(
        with - without >= 0.10 - 1e-12,
        "with PPR {with}, without {without}"
    );

    let scenarios =
        fs::read_to_string(ws.corpus.join("scenarios.jsonl")).map_err(|e| e.to_string())?;
    for line in scenarios.lines() {
        let id = ablation_record(line)?["query_id"].clone();
        ensure!(
            won.contains(&id),
            "buried-tool query {id} not recovered by PPR"
        );
    }
    Ok(format!("replayed: with PPR {with:.2}, without {without:.2}, delta {:.2}; every buried-tool query won", with - without))
}

fn stub_determinism(ws: &Workspace) -> Outcome {
    // A second corpus in a different directory, so equality is not an
    // artifact of re-running over stale outputs.
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let other = tmp.path().join("c2");
    toolweave(&["synth", "--out", path_str(&other)])?;
    let mut snaps = Vec::new();
    for dir in [&ws.corpus, &other, &ws.corpus] {
        let cfg = dir.join("toolweave.toml");
        toolweave(&["pipeline", "--config", path_str(&cfg), "--mode", "stub"])?;
        snaps.push(snapshot(&dir.join("out")));
    }
    let expected = [
        "dependencies.jsonl",
        "tool_graph.jsonl",
        "doc_graph.jsonl",
        "graph.jsonl",
        "store.jsonl",
        "artifacts.jsonl",
        "reports/plan_report.jsonl",
        "reports/dependency_report.jsonl",
    ];
    for name in expected {
        let key = PathBuf::from(name);
        let a = snaps[0].get(&key).ok_or(format!("{name} not written"))?;
        ensure!(
            !a.is_empty() || name.contains("failures"),
            "{name} is empty"
        );
        for (i, s) in snaps.iter().enumerate().skip(1) {
            ensure!(s.get(&key) == Some(a), "{name} differs on run {}", i + 1);
        }
    }
    // Ablation outputs exist only in the first directory; compare the files both runs share.
    let shared: Vec<_> = snaps[1].keys().collect();
    for k in &shared {
        ensure!(
            snaps[0].get(*k) == snaps[1].get(*k),
            "{} differs between directories",
            k.display()
        );
    }
    Ok(format!(
        "3 stub pipeline runs over 2 directories, {} output files byte-identical",
        shared.len()
    ))
}

fn cosine_f64(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn random_vector(rng: &mut ChaCha8Rng, dims: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dims).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

fn retrieval_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let dims = 24;
    let kinds = [EntryKind::Triplet, EntryKind::Passage, EntryKind::Artifact];
    let mut store = VectorStore::new(dims);
    let mut rows = Vec::new();
    for i in 0..1000 {
        let v = random_vector(&mut rng, dims);
        let kind = kinds[i % 3];
        rows.push((format!("e{i:04}"), v.clone(), kind));
        store
            .insert(
                format!("e{i:04}"),
                StoreEntry {
                    vector: v,
                    kind,
                    metadata: BTreeMap::new(),
                },
            )
            .map_err(|e| e.to_string())?;
    }
    let mut checks = 0;
    for trial in 0..5 {
        let q = random_vector(&mut rng, dims);
        for filter in [None, Some(EntryKind::Passage)] {
            let mut all: Vec<(&str, f64)> = rows
                .iter()
                .filter(|(_, _, k)| filter.is_none_or(|f| f == *k))
                .map(|(id, v, _)| (id.as_str(), cosine_f64(&q, v)))
                .collect();
            all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
            for k in [1, 10, 100] {
                let got = store.top_k(&q, k, filter).map_err(|e| e.to_string())?;
                let got_ids: Vec<&str> = got.iter().map(|(id, _)| id.as_str()).collect();
                let want_ids: Vec<&str> = all.iter().take(k).map(|(id, _)| *id).collect();
                ensure!(
                    got_ids == want_ids,
                    "trial {trial} k={k} filter={filter:?}: ranking differs"
                );
                for ((_, gs), (_, ws)) in got.iter().zip(&all) {
                    ensure!((gs - ws).abs() < 1e-6, "score {gs} vs exhaustive {ws}");
                }
                checks += 1;
            }
        }
    }
    Ok(format!(
        "1000 entries, k in {{1, 10, 100}}, {checks} queries match exhaustive sort"
    ))
}

fn round_trips(ws: &Workspace) -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let copy = tmp.path().join("copy.jsonl");
    let same_bytes = |a: &Path, b: &Path| fs::read(a).ok() == fs::read(b).ok();

    for name in ["graph.jsonl", "tool_graph.jsonl", "doc_graph.jsonl"] {
        let g = FusedGraph::load(&ws.out(name)).map_err(|e| e.to_string())?;
        g.save(&copy).map_err(|e| e.to_string())?;
        ensure!(
            FusedGraph::load(&copy).map_err(|e| e.to_string())? == g,
            "{name}: load(save(g)) != g"
        );
        ensure!(
            same_bytes(&copy, &ws.out(name)),
            "{name}: re-saved bytes differ"
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let names: Vec<String> = (0..12).map(|i| format!("t{i}")).collect();
    let edges: Vec<_> = (0..11)
        .map(|i| (i, i + 1, rng.random_range(1e-9..1e9)))
        .collect();
    let g = tool_graph(&names, &edges);
    g.save(&copy).map_err(|e| e.to_string())?;
    let back = FusedGraph::load(&copy).map_err(|e| e.to_string())?;
    let bits = |g: &FusedGraph| {
        g.edges()
            .iter()
            .map(|e| e.weight.to_bits())
            .collect::<Vec<_>>()
    };
    ensure!(
        back == g && bits(&back) == bits(&g),
        "random-weight graph does not round-trip bit-exactly"
    );

    let store = VectorStore::load(&ws.out("store.jsonl")).map_err(|e| e.to_string())?;
    store.save(&copy).map_err(|e| e.to_string())?;
    ensure!(
        VectorStore::load(&copy).map_err(|e| e.to_string())? == store,
        "store: load(save(s)) != s"
    );
    ensure!(
        same_bytes(&copy, &ws.out("store.jsonl")),
        "store: re-saved bytes differ"
    );
    let mut s = VectorStore::new(7);
    for i in 0..50 {
        let v: Vec<f32> = (0..7)
            .map(|_| {
                f32::from_bits(rng.random_range(0x0080_0000u32..0x7f00_0000))
                    * if rng.random_bool(0.5) { -1.0 } else { 1.0 }
            })
            .collect();
        s.insert(
            format!("r{i}"),
            StoreEntry {
                vector: v,
                kind: EntryKind::Passage,
                metadata: BTreeMap::new(),
            },
        )
        .unwrap();
    }
    s.save(&copy).map_err(|e| e.to_string())?;
    let back = VectorStore::load(&copy).map_err(|e| e.to_string())?;
    let vbits = |s: &VectorStore| {
        s.entries()
            .flat_map(|(_, e)| e.vector.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    };
    ensure!(
        back == s && vbits(&back) == vbits(&s),
        "random store does not round-trip bit-exactly"
    );

    let artifacts = load_artifacts(&ws.out("artifacts.jsonl")).map_err(|e| e.to_string())?;
    let text = artifacts_to_jsonl(&artifacts);
    ensure!(
        parse_artifacts(&text).map_err(|e| e.to_string())? == artifacts,
        "artifacts: parse(render(a)) != a"
    );
    ensure!(
        text.as_bytes() == fs::read(ws.out("artifacts.jsonl")).unwrap(),
        "artifacts: re-rendered bytes differ"
    );

    let fixtures =
        FixtureFile::load(&ws.corpus.join("fixtures.jsonl")).map_err(|e| e.to_string())?;
    fixtures.save(&copy).map_err(|e| e.to_string())?;
    ensure!(
        FixtureFile::load(&copy).map_err(|e| e.to_string())? == fixtures,
        "fixtures: load(save(f)) != f"
    );
    ensure!(
        same_bytes(&copy, &ws.corpus.join("fixtures.jsonl")),
        "fixtures: re-saved bytes differ"
    );
    Ok(format!(
        "graph x4, store x2, {} artifacts, {} fixtures: load(save(x)) == x and bytes stable",
        artifacts.len(),
        fixtures.len()
    ))
}

/// A corrupt plan for `tools` and the exact violation kinds it must raise.
fn corrupt_plan(variant: usize, tools: &[ToolSchema]) -> (String, BTreeSet<ViolationKind>) {
    use ViolationKind::*;
    let (a, b) = (&tools[0].tool_id, &tools[1].tool_id);
    let arg_b = &tools[1].arguments[0].name;
    let (text, kinds) = match variant {
        0 => ("I could not come up with a plan.".to_string(), vec![Malformed]),
        1 => (json!({"steps": []}).to_string(), vec![EmptyPlan]),
        2 => (json!({"steps": [{"tool": "no_such_tool_zz"}]}).to_string(), vec![UnknownTool]),
        3 => (json!({"steps": [{"tool": a, "arguments": {"bogus_arg_zz": {"literal": 1}}}]}).to_string(), vec![UnknownArgument]),
        4 => (json!({"steps": [{"tool": a, "depends_on": [7]}]}).to_string(), vec![UnknownStep]),
        5 => (json!({"steps": [{"tool": a, "depends_on": [2]}, {"tool": b}]}).to_string(), vec![ForwardReference]),
        6 => (json!({"steps": [{"tool": a, "depends_on": [2]}, {"tool": b, "depends_on": [1]}]}).to_string(), vec![ForwardReference, Cycle]),
        7 => (json!({"steps": [{"step_index": 1, "tool": a}, {"step_index": 1, "tool": b}]}).to_string(), vec![BadStepIndex]),
        8 => (
            json!({"steps": [{"tool": a}, {"tool": b, "arguments": {arg_b: {"ref": {"step": 1, "field": "no_such_field_zz"}}}}]}).to_string(),
            vec![UnknownOutputField],
        ),
        _ => {
            let (src, field, dst, arg) = incompatible_pair(tools);
            (
                json!({"steps": [{"tool": src}, {"tool": dst, "arguments": {arg: {"ref": {"step": 1, "field": field}}}}]}).to_string(),
                vec![TypeMismatch],
            )
        }
    };
    (text, kinds.into_iter().collect())
}

/// First (tool, payload field, tool, argument) whose types cannot connect.
fn incompatible_pair(tools: &[ToolSchema]) -> (String, String, String, String) {
    for s in tools {
        for f in &s.output_payload {
            for t in tools.iter().filter(|t| t.tool_id != s.tool_id) {
                if let Some(a) = t
                    .arguments
                    .iter()
                    .find(|a| !f.type_tag.compatible(a.type_tag))
                {
                    return (
                        s.tool_id.clone(),
                        f.name.clone(),
                        t.tool_id.clone(),
                        a.name.clone(),
                    );
                }
            }
        }
    }
    panic!("corpus has no type-incompatible field pair")
}

fn validation_soundness(ws: &Workspace) -> Outcome {
    let tools = load_tool_corpus(&ws.corpus.join("tools.jsonl")).map_err(|e| e.to_string())?;
    let mut persisted = 0;
    for name in [
        "artifacts.jsonl",
        "reports/ablation_ppr_artifacts.jsonl",
        "reports/ablation_no_ppr_artifacts.jsonl",
    ] {
        for a in load_artifacts(&ws.out(name)).map_err(|e| e.to_string())? {
            let v = toolweave::plan::validate_plan(&a, &tools, None);
            ensure!(v.is_empty(), "{name} {}: {v:?}", a.query_id);
            persisted += 1;
        }
    }

    let queries = load_queries(&ws.corpus.join("queries.jsonl")).map_err(|e| e.to_string())?;
    let graph = FusedGraph::load(&ws.out("graph.jsonl")).map_err(|e| e.to_string())?;
    let store = VectorStore::load(&ws.out("store.jsonl")).map_err(|e| e.to_string())?;
    let stub = Gateway::stub();
    let retrieval = CorpusSpec::default().retrieval_config();
    let config = GenerationConfig {
        max_attempts: 1,
        ..GenerationConfig::default()
    };
    let mut rejected = 0;
    let mut by_kind: BTreeMap<ViolationKind, usize> = BTreeMap::new();
    for i in 0..100 {
        let q = &queries[i % queries.len()];
        let variant = i / queries.len() % 10;
        let ctx = retrieve_context(&q.text, &graph, &store, &stub, &retrieval)
            .map_err(|e| e.to_string())?;
        let bundle = assemble_context(
            q,
            &ctx.subgraph,
            &ctx.node_scores,
            &ctx.passages,
            &tools,
            config.budget,
        )
        .map_err(|e| e.to_string())?;
        let (text, expected) = corrupt_plan(variant, tools.tools());
        let mut fixtures = FixtureFile::new();
        fixtures
            .insert_response(&generate_request(&bundle, &config, 1, &[]), text)
            .map_err(|e| e.to_string())?;
        match generate_plan(
            &bundle,
            &Gateway::replay(fixtures),
            &tools,
            Some(&graph),
            &config,
        ) {
            Err(PlanError::GenerationRejected {
                attempts: 1,
                violations,
                ..
            }) => {
                let kinds: BTreeSet<ViolationKind> = violations.iter().map(|v| v.kind).collect();
                ensure!(
                    kinds == expected,
                    "corruption {i} (variant {variant}): got {kinds:?}, expected {expected:?}"
                );
                for k in kinds {
                    *by_kind.entry(k).or_default() += 1;
                }
                rejected += 1;
            }
            other => {
                return Err(format!(
                    "corruption {i} (variant {variant}) was not rejected: {other:?}"
                ))
            }
        }
    }
    ensure!(
        rejected == 100,
        "{rejected} of 100 corrupted plans rejected"
    );
    Ok(format!("{persisted} persisted artifacts valid; 100/100 corrupted plans rejected with expected categories {by_kind:?}"))
}

/// An artifact that reproduces the query's gold plan.
fn gold_artifact(q: &QueryRecord, tools: &ToolCorpus) -> Result<PlanArtifact, String> {
    let gold = q
        .gold_plan
        .as_ref()
        .ok_or(format!("{} has no gold plan", q.query_id))?;
    let chain: Vec<&ToolSchema> = gold
        .steps
        .iter()
        .map(|s| {
            tools
                .get(&s.tool_id)
                .ok_or(format!("unknown tool {}", s.tool_id))
        })
        .collect::<Result<_, _>>()?;
    let steps = parse_plan_response(&chain_plan_response(&chain)).map_err(|v| v.message)?;
    Ok(PlanArtifact {
        query_id: q.query_id.clone(),
        query: q.text.clone(),
        steps,
        supporting_passage_ids: vec![],
        subgraph_fingerprint: String::new(),
        generator: Generator::Stub,
    })
}

fn judge_range(ws: &Workspace) -> Outcome {
    let tools = load_tool_corpus(&ws.corpus.join("tools.jsonl")).map_err(|e| e.to_string())?;
    let queries = load_queries(&ws.corpus.join("queries.jsonl")).map_err(|e| e.to_string())?;
    let bad = ["3", "-1", "{\"score\": 7}", "excellent", "1.5", ""];
    let stub = Gateway::stub();
    let mut protocol_errors = 0;
    let mut artifacts = Vec::new();
    for (i, q) in queries.iter().enumerate() {
        let a = gold_artifact(q, &tools)?;
        let gold = q.gold_plan.as_ref().unwrap();
        ensure!(
            binary_match(&a, gold),
            "{}: gold artifact does not binary-match",
            q.query_id
        );
        let score = judge_plan(&a, gold, &stub, DEFAULT_JUDGE_PROMPT).map_err(|e| e.to_string())?;
        ensure!(
            score == 2,
            "{}: stub judge gave {score} on a binary match",
            q.query_id
        );

        let mut fixtures = FixtureFile::new();
        fixtures
            .insert_response(
                &plan_judge_request(&a, gold, DEFAULT_JUDGE_PROMPT),
                bad[i % bad.len()],
            )
            .map_err(|e| e.to_string())?;
        match judge_plan(&a, gold, &Gateway::replay(fixtures), DEFAULT_JUDGE_PROMPT) {
            Err(EvalError::JudgeProtocol { .. }) => protocol_errors += 1,
            other => {
                return Err(format!(
                    "{}: corrupted score {:?} gave {other:?}",
                    q.query_id,
                    bad[i % bad.len()]
                ))
            }
        }
        artifacts.push(a);
    }

    // One corrupted entry among valid ones fails the whole evaluation.
    let mut fixtures = FixtureFile::new();
    for (k, (a, q)) in artifacts.iter().zip(&queries).enumerate() {
        let response = if k == 0 { "5" } else { "2" };
        fixtures
            .insert_response(
                &plan_judge_request(a, q.gold_plan.as_ref().unwrap(), DEFAULT_JUDGE_PROMPT),
                response,
            )
            .unwrap();
    }
    let eval = evaluate_plans(
        &artifacts,
        &queries,
        &Gateway::replay(fixtures),
        &EvalConfig::default(),
    );
    ensure!(
        matches!(eval, Err(EvalError::JudgeProtocol { .. })),
        "evaluate_plans accepted an out-of-range score: {eval:?}"
    );

    let stub_report = evaluate_plans(&artifacts, &queries, &stub, &EvalConfig::default())
        .map_err(|e| e.to_string())?;
    ensure!(
        stub_report
            .records
            .iter()
            .all(|r| r.binary_match && r.judge_score == 2),
        "stub evaluation: {stub_report:?}"
    );
    Ok(format!("{protocol_errors} corrupted judge scores raised JudgeProtocol; stub judge scored 2 on all {} matched queries", artifacts.len()))
}

fn main() {
    let workspace = Workspace::new();
    let ws_ref = &workspace;
    let needs_ws = |f: fn(&Workspace) -> Outcome| -> Check<'_> {
        Box::new(move || match ws_ref {
            Ok(ws) => f(ws),
            Err(e) => Err(format!("workspace setup failed: {e}")),
        })
    };
    let criteria: Vec<(&str, Check)> = vec![
        (
            "ppr matches dense linear solve",
            Box::new(ppr_oracle_equivalence),
        ),
        ("ppr two-node closed form", Box::new(ppr_closed_form)),
        (
            "dependency metric arithmetic",
            Box::new(dependency_metric_arithmetic),
        ),
        (
            "stub extraction exactness",
            Box::new(stub_extraction_exactness),
        ),
        (
            "ppr ablation direction under replay",
            needs_ws(ablation_direction),
        ),
        ("stub pipeline determinism", needs_ws(stub_determinism)),
        ("top-k matches exhaustive sort", Box::new(retrieval_oracle)),
        ("file round-trips", needs_ws(round_trips)),
        ("plan validation soundness", needs_ws(validation_soundness)),
        ("judge range enforcement", needs_ws(judge_range)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
