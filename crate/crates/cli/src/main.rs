//! `toolweave` command-line driver.
//!
//! Each subcommand runs one pipeline stage over files named in a shared
//! TOML config; flags override the config. Every run ends with a single
//! `status=<ok|fail> stage=<name> key=value ...` line on stdout.

mod commands;
mod config;
mod error;
mod summary;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toolweave::gateway::Mode;
use tracing_subscriber::EnvFilter;

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::summary::Summary;

#[derive(Debug, Parser)]
#[command(
    name = "toolweave",
    version,
    about = "Tool dependency graphs and graph-augmented plan generation"
)]
struct Cli {
    /// Pipeline config file (TOML). Relative paths inside it resolve against its directory.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Gateway mode for LLM and embedding calls.
    #[arg(
        long,
        global = true,
        visible_alias = "provider",
        value_name = "live|replay|stub"
    )]
    mode: Option<Mode>,
    /// Fixture file read in replay mode and written with --record.
    #[arg(long, global = true, value_name = "PATH")]
    fixtures: Option<PathBuf>,
    /// In live mode, merge every provider response into the fixture file.
    #[arg(long, global = true)]
    record: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate tool schemas, queries and documents.
    IngestTools(IngestToolsArgs),
    /// Discover tool dependencies from schemas.
    ExtractDeps(ExtractDepsArgs),
    /// Build the tool graph from schemas and accepted dependencies.
    BuildGraph(BuildGraphArgs),
    /// Build the document graph from passages.
    IngestDocs(IngestDocsArgs),
    /// Merge the tool and document graphs.
    Fuse(FuseArgs),
    /// Embed graph triplets and passages into a vector store.
    Index(IndexArgs),
    /// Personalized PageRank from explicit seeds.
    Ppr(PprArgs),
    /// Retrieve context and generate plan artifacts for queries.
    Generate(GenerateArgs),
    /// Score plan artifacts against gold plans.
    Evaluate(EvaluateArgs),
    /// Generate and evaluate with and without PPR.
    Ablate(AblateArgs),
    /// Run every stage in order using the config file.
    Pipeline,
    /// Write a synthetic corpus and a matching config.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
struct QueryArgs {
    /// Query file (JSONL).
    #[arg(long, value_name = "PATH")]
    queries: Option<PathBuf>,
    /// Keep only queries of this level.
    #[arg(long, value_name = "G1|G2|G3")]
    level: Option<String>,
    /// Draw a seeded sample of this many queries.
    #[arg(long, value_name = "N")]
    sample: Option<usize>,
    /// Sampling seed.
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct IngestToolsArgs {
    /// Tool schema file (JSONL).
    #[arg(long, value_name = "PATH")]
    tools: Option<PathBuf>,
    /// Document file (JSONL).
    #[arg(long, value_name = "PATH")]
    docs: Option<PathBuf>,
    #[command(flatten)]
    queries: QueryArgs,
    /// Write normalized tools, queries and documents into this directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExtractDepsArgs {
    #[arg(long, value_name = "PATH")]
    tools: Option<PathBuf>,
    /// Dependency output file.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    max_in_flight: Option<usize>,
    #[arg(long, value_name = "all|overlap")]
    blocking: Option<String>,
    /// Accept every well-formed proposal without the judge pass.
    #[arg(long)]
    no_judge: bool,
    /// Planted or labelled dependencies to score against.
    #[arg(long, value_name = "PATH")]
    gold: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BuildGraphArgs {
    #[arg(long, value_name = "PATH")]
    tools: Option<PathBuf>,
    /// Dependency file from extract-deps.
    #[arg(long, value_name = "PATH")]
    deps: Option<PathBuf>,
    /// Tool graph output file.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IngestDocsArgs {
    #[arg(long, value_name = "PATH")]
    docs: Option<PathBuf>,
    /// Document graph output file.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FuseArgs {
    #[arg(long, value_name = "PATH")]
    tool_graph: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    doc_graph: Option<PathBuf>,
    /// Fused graph output file.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IndexArgs {
    #[arg(long, value_name = "PATH")]
    graph: Option<PathBuf>,
    /// Vector store output file.
    #[arg(long, value_name = "PATH")]
    store: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PprArgs {
    #[arg(long, value_name = "PATH")]
    graph: Option<PathBuf>,
    /// Comma-separated `node_id[:mass]` list; masses are normalized to sum to 1.
    #[arg(long, value_name = "ID:MASS,...", required = true)]
    seeds: String,
    #[arg(long, value_name = "D")]
    damping: Option<f64>,
    #[arg(long, value_name = "N")]
    top_n: Option<usize>,
    #[arg(long, value_name = "as_is|symmetrize")]
    direction: Option<String>,
    /// Write the ranking here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct RetrievalArgs {
    #[arg(long, value_name = "PATH")]
    tools: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    graph: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    store: Option<PathBuf>,
    #[command(flatten)]
    queries: QueryArgs,
    /// Nodes kept from the PPR ranking.
    #[arg(long, value_name = "N")]
    top_n: Option<usize>,
    #[arg(long, value_name = "K")]
    triplet_k: Option<usize>,
    #[arg(long, value_name = "K")]
    passage_k: Option<usize>,
    /// Prompt token budget.
    #[arg(long, value_name = "B")]
    budget: Option<usize>,
    /// Require a graph edge behind every cross-step reference.
    #[arg(long)]
    strict: bool,
    #[arg(long, value_name = "N")]
    max_in_flight: Option<usize>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[command(flatten)]
    retrieval: RetrievalArgs,
    /// Embedding-only context: skip PPR expansion.
    #[arg(long)]
    no_ppr: bool,
    /// Artifact output file.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long, value_name = "PATH")]
    artifacts: Option<PathBuf>,
    /// Query file holding the gold plans.
    #[arg(long, value_name = "PATH")]
    gold: Option<PathBuf>,
    /// Tool schemas; when given, queries with unresolvable gold plans are dropped.
    #[arg(long, value_name = "PATH")]
    tools: Option<PathBuf>,
    #[arg(long, value_name = "G1|G2|G3")]
    level: Option<String>,
    #[arg(long, value_name = "N")]
    sample: Option<usize>,
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
    /// Report output file.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    retrieval: RetrievalArgs,
    /// Report output file.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Corpus spec (TOML); defaults apply to omitted keys.
    #[arg(long, value_name = "PATH")]
    spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Also run the pipeline against a scripted provider and save its
    /// responses as replay fixtures.
    #[arg(long)]
    with_fixtures: bool,
}

impl QueryArgs {
    fn apply(self, cfg: &mut PipelineConfig) {
        override_opt(&mut cfg.paths.queries, self.queries);
        override_opt(&mut cfg.queries.level, self.level);
        override_opt(&mut cfg.queries.sample, self.sample);
        override_val(&mut cfg.queries.seed, self.seed);
    }
}

impl RetrievalArgs {
    fn apply(self, cfg: &mut PipelineConfig) {
        override_opt(&mut cfg.paths.tools, self.tools);
        override_opt(&mut cfg.paths.graph, self.graph);
        override_opt(&mut cfg.paths.store, self.store);
        self.queries.apply(cfg);
        override_val(&mut cfg.retrieval.top_n, self.top_n);
        override_val(&mut cfg.retrieval.triplet_k, self.triplet_k);
        override_val(&mut cfg.retrieval.passage_k, self.passage_k);
        override_val(&mut cfg.generation.budget, self.budget);
        override_val(&mut cfg.generation.max_in_flight, self.max_in_flight);
        cfg.generation.strict |= self.strict;
    }
}

fn override_opt<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn override_val<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn run(cli: Cli) -> Result<Summary, CliError> {
    if let Command::Synth(a) = cli.command {
        return commands::synth(a.spec.as_deref(), &a.out, a.with_fixtures);
    }
    let mut cfg = PipelineConfig::load_or_default(cli.config.as_deref())?;
    if let Some(m) = cli.mode {
        cfg.gateway.mode = m.to_string();
    }
    override_opt(&mut cfg.paths.fixtures, cli.fixtures);
    cfg.gateway.record |= cli.record;

    match cli.command {
        Command::IngestTools(a) => {
            override_opt(&mut cfg.paths.tools, a.tools);
            override_opt(&mut cfg.paths.docs, a.docs);
            a.queries.apply(&mut cfg);
            cfg.validate()?;
            commands::ingest_tools(&cfg, a.out.as_deref())
        }
        Command::ExtractDeps(a) => {
            override_opt(&mut cfg.paths.tools, a.tools);
            override_opt(&mut cfg.paths.dependencies, a.out);
            override_opt(&mut cfg.paths.gold_dependencies, a.gold);
            override_val(&mut cfg.extraction.max_in_flight, a.max_in_flight);
            override_opt(&mut cfg.extraction.blocking, a.blocking);
            cfg.extraction.judge &= !a.no_judge;
            cfg.validate()?;
            commands::with_gateway(&cfg, |gw| commands::extract_deps(&cfg, gw))
        }
        Command::BuildGraph(a) => {
            override_opt(&mut cfg.paths.tools, a.tools);
            override_opt(&mut cfg.paths.dependencies, a.deps);
            override_opt(&mut cfg.paths.tool_graph, a.out);
            cfg.validate()?;
            commands::build_graph(&cfg)
        }
        Command::IngestDocs(a) => {
            override_opt(&mut cfg.paths.docs, a.docs);
            override_opt(&mut cfg.paths.doc_graph, a.out);
            cfg.validate()?;
            commands::with_gateway(&cfg, |gw| commands::ingest_docs(&cfg, gw))
        }
        Command::Fuse(a) => {
            override_opt(&mut cfg.paths.tool_graph, a.tool_graph);
            override_opt(&mut cfg.paths.doc_graph, a.doc_graph);
            override_opt(&mut cfg.paths.graph, a.out);
            cfg.validate()?;
            commands::fuse(&cfg)
        }
        Command::Index(a) => {
            override_opt(&mut cfg.paths.graph, a.graph);
            override_opt(&mut cfg.paths.store, a.store);
            cfg.validate()?;
            commands::with_gateway(&cfg, |gw| commands::index(&cfg, gw))
        }
        Command::Ppr(a) => {
            override_opt(&mut cfg.paths.graph, a.graph);
            override_val(&mut cfg.ppr.damping, a.damping);
            override_val(&mut cfg.retrieval.top_n, a.top_n);
            override_val(&mut cfg.ppr.edge_direction, a.direction);
            cfg.validate()?;
            commands::ppr(&cfg, &a.seeds, a.out.as_deref())
        }
        Command::Generate(a) => {
            a.retrieval.apply(&mut cfg);
            override_opt(&mut cfg.paths.artifacts, a.out);
            cfg.retrieval.use_ppr &= !a.no_ppr;
            cfg.validate()?;
            commands::with_gateway(&cfg, |gw| commands::generate(&cfg, gw))
        }
        Command::Evaluate(a) => {
            override_opt(&mut cfg.paths.artifacts, a.artifacts);
            override_opt(&mut cfg.paths.queries, a.gold);
            override_opt(&mut cfg.paths.tools, a.tools);
            override_opt(&mut cfg.queries.level, a.level);
            override_opt(&mut cfg.queries.sample, a.sample);
            override_val(&mut cfg.queries.seed, a.seed);
            cfg.validate()?;
            commands::with_gateway(&cfg, |gw| commands::evaluate(&cfg, gw, a.report.as_deref()))
        }
        Command::Ablate(a) => {
            a.retrieval.apply(&mut cfg);
            cfg.validate()?;
            commands::with_gateway(&cfg, |gw| commands::ablate(&cfg, gw, a.report.as_deref()))
        }
        Command::Pipeline => {
            cfg.validate()?;
            commands::with_gateway(&cfg, |gw| commands::pipeline(&cfg, gw))
        }
        Command::Synth(_) => unreachable!("handled above"),
    }
}

fn stage_name(command: &Command) -> &'static str {
    match command {
        Command::IngestTools(_) => "ingest-tools",
        Command::ExtractDeps(_) => "extract-deps",
        Command::BuildGraph(_) => "build-graph",
        Command::IngestDocs(_) => "ingest-docs",
        Command::Fuse(_) => "fuse",
        Command::Index(_) => "index",
        Command::Ppr(_) => "ppr",
        Command::Generate(_) => "generate",
        Command::Evaluate(_) => "evaluate",
        Command::Ablate(_) => "ablate",
        Command::Pipeline => "pipeline",
        Command::Synth(_) => "synth",
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_env("TOOLWEAVE_LOG").unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let s = Summary::fail("cli")
                .with("error", "usage")
                .with("message", e.kind());
            println!("{s}");
            return ExitCode::from(1);
        }
    };
    let stage = stage_name(&cli.command);
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut s = Summary::fail(stage).with("error", e.kind());
            if let CliError::Config { field, .. } = &e {
                s.set("field", field);
            }
            s.set("message", &e);
            println!("{s}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config_values() {
        let cli = Cli::parse_from([
            "toolweave",
            "generate",
            "--no-ppr",
            "--top-n",
            "7",
            "--budget",
            "300",
            "--queries",
            "q.jsonl",
        ]);
        let Command::Generate(a) = cli.command else {
            panic!()
        };
        let mut cfg = PipelineConfig::default();
        cfg.retrieval.top_n = 40;
        cfg.paths.queries = Some("config_q.jsonl".into());
        a.retrieval.apply(&mut cfg);
        assert_eq!(cfg.retrieval.top_n, 7);
        assert_eq!(cfg.generation.budget, 300);
        assert_eq!(
            cfg.paths.queries.as_deref(),
            Some(std::path::Path::new("q.jsonl"))
        );
        assert!(a.no_ppr);
    }

    #[test]
    fn global_flags_work_after_the_subcommand() {
        let cli = Cli::parse_from(["toolweave", "index", "--provider", "stub", "--graph", "g"]);
        assert_eq!(cli.mode, Some(Mode::Stub));
        let cli = Cli::parse_from([
            "toolweave",
            "pipeline",
            "--mode",
            "replay",
            "--fixtures",
            "f.jsonl",
        ]);
        assert_eq!(cli.mode, Some(Mode::Replay));
        assert!(Cli::try_parse_from(["toolweave", "pipeline", "--mode", "offline"]).is_err());
    }
}
