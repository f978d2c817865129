//! Pipeline configuration file.
//!
//! A TOML document with one table per stage. Relative paths are resolved
//! against the directory holding the file; command-line flags are applied
//! on top by the subcommands.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use toolweave::gateway::{LiveConfig, Mode};
use toolweave::graph::{EdgeDirection, PprConfig};
use toolweave::plan::RetrievalConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub queries: QuerySelection,
    pub extraction: Extraction,
    pub ppr: Ppr,
    pub retrieval: Retrieval,
    pub generation: Generation,
    pub evaluation: Evaluation,
    pub gateway: GatewaySection,
    pub prompts: Prompts,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub tools: Option<PathBuf>,
    pub docs: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub gold_dependencies: Option<PathBuf>,
    pub dependencies: Option<PathBuf>,
    pub tool_graph: Option<PathBuf>,
    pub doc_graph: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    pub artifacts: Option<PathBuf>,
    /// Directory for evaluation and failure reports.
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuerySelection {
    pub level: Option<String>,
    pub sample: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Extraction {
    pub max_in_flight: usize,
    /// `all` or `overlap`; unset picks by corpus size.
    pub blocking: Option<String>,
    pub judge: bool,
}

impl Default for Extraction {
    fn default() -> Self {
        Self {
            max_in_flight: 4,
            blocking: None,
            judge: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ppr {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub edge_direction: String,
}

impl Default for Ppr {
    fn default() -> Self {
        let d = PprConfig::default();
        Self {
            damping: d.damping,
            tolerance: d.tolerance,
            max_iterations: d.max_iterations,
            edge_direction: "symmetrize".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Retrieval {
    pub triplet_k: usize,
    pub passage_k: usize,
    pub top_n: usize,
    pub use_ppr: bool,
    pub passage_seeds: bool,
}

impl Default for Retrieval {
    fn default() -> Self {
        let d = RetrievalConfig::default();
        Self {
            triplet_k: d.triplet_k,
            passage_k: d.passage_k,
            top_n: d.top_n,
            use_ppr: d.use_ppr,
            passage_seeds: d.passage_seeds,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Generation {
    pub budget: usize,
    pub max_attempts: usize,
    pub strict: bool,
    pub max_in_flight: usize,
}

impl Default for Generation {
    fn default() -> Self {
        let d = toolweave::plan::GenerationConfig::default();
        Self {
            budget: d.budget,
            max_attempts: d.max_attempts,
            strict: d.strict,
            max_in_flight: d.max_in_flight,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Evaluation {
    pub max_in_flight: usize,
}

impl Default for Evaluation {
    fn default() -> Self {
        Self { max_in_flight: 4 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySection {
    pub mode: String,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub embed_model: Option<String>,
    pub timeout_secs: f64,
    pub requests_per_second: f64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    /// In live mode, append every response to `paths.fixtures`.
    pub record: bool,
}

impl Default for GatewaySection {
    fn default() -> Self {
        let d = LiveConfig::default();
        Self {
            mode: "stub".into(),
            endpoint: None,
            model: None,
            embed_model: None,
            timeout_secs: d.timeout.as_secs_f64(),
            requests_per_second: d.requests_per_second,
            max_attempts: d.max_attempts,
            backoff_ms: d.backoff_base.as_millis() as u64,
            record: false,
        }
    }
}

/// Instruction overrides. Changing any of them changes request
/// fingerprints, so recorded fixtures stop matching.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Prompts {
    pub propose: Option<String>,
    pub judge: Option<String>,
    pub extract: Option<String>,
    pub generate: Option<String>,
    pub plan_judge: Option<String>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: PipelineConfig = toml::from_str(&text).map_err(|e| CliError::Config {
            field: e
                .span()
                .map(|s| field_at(&text, s.start))
                .unwrap_or_else(|| "config".into()),
            message: format!("{}: {}", path.display(), e.message()),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.paths.resolve(base);
        Ok(cfg)
    }

    /// Reads `path` when given, defaults otherwise.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map(Self::load)
            .transpose()
            .map(Option::unwrap_or_default)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, message: String| {
            Err(CliError::Config {
                field: field.into(),
                message,
            })
        };
        let p = &self.ppr;
        if !(p.damping > 0.0 && p.damping < 1.0) {
            return bad(
                "ppr.damping",
                format!("must be in (0, 1), got {}", p.damping),
            );
        }
        if !(p.tolerance > 0.0 && p.tolerance.is_finite()) {
            return bad(
                "ppr.tolerance",
                format!("must be positive, got {}", p.tolerance),
            );
        }
        self.ppr_config()?;
        for (field, v) in [
            ("ppr.max_iterations", p.max_iterations),
            ("retrieval.top_n", self.retrieval.top_n),
            ("generation.budget", self.generation.budget),
            ("generation.max_attempts", self.generation.max_attempts),
            ("generation.max_in_flight", self.generation.max_in_flight),
            ("extraction.max_in_flight", self.extraction.max_in_flight),
            ("evaluation.max_in_flight", self.evaluation.max_in_flight),
        ] {
            if v == 0 {
                return bad(field, "must be at least 1".into());
            }
        }
        if self.retrieval.triplet_k == 0 && self.retrieval.passage_k == 0 {
            return bad(
                "retrieval.triplet_k",
                "triplet_k and passage_k cannot both be 0".into(),
            );
        }
        let g = &self.gateway;
        if !(g.timeout_secs > 0.0 && g.timeout_secs.is_finite()) {
            return bad(
                "gateway.timeout_secs",
                format!("must be positive, got {}", g.timeout_secs),
            );
        }
        if !g.requests_per_second.is_finite() {
            return bad("gateway.requests_per_second", "must be finite".into());
        }
        if g.max_attempts == 0 {
            return bad("gateway.max_attempts", "must be at least 1".into());
        }
        self.mode()?;
        if let Some(b) = &self.extraction.blocking {
            b.parse::<toolweave::extract::PairBlocking>()
                .map_err(|m| CliError::Config {
                    field: "extraction.blocking".into(),
                    message: m,
                })?;
        }
        if let Some(l) = &self.queries.level {
            l.parse::<toolweave::schema::Level>()
                .map_err(|e| CliError::Config {
                    field: "queries.level".into(),
                    message: e.to_string(),
                })?;
        }
        Ok(())
    }

    pub fn mode(&self) -> Result<Mode, CliError> {
        self.gateway.mode.parse().map_err(|m| CliError::Config {
            field: "gateway.mode".into(),
            message: m,
        })
    }

    pub fn ppr_config(&self) -> Result<PprConfig, CliError> {
        let edge_direction: EdgeDirection =
            self.ppr
                .edge_direction
                .parse()
                .map_err(|m| CliError::Config {
                    field: "ppr.edge_direction".into(),
                    message: m,
                })?;
        Ok(PprConfig {
            damping: self.ppr.damping,
            tolerance: self.ppr.tolerance,
            max_iterations: self.ppr.max_iterations,
            edge_direction,
            ..PprConfig::default()
        })
    }

    pub fn retrieval_config(&self) -> Result<RetrievalConfig, CliError> {
        let r = &self.retrieval;
        Ok(RetrievalConfig {
            triplet_k: r.triplet_k,
            passage_k: r.passage_k,
            top_n: r.top_n,
            use_ppr: r.use_ppr,
            passage_seeds: r.passage_seeds,
            ppr: self.ppr_config()?,
        })
    }

    pub fn live_config(&self) -> LiveConfig {
        let g = &self.gateway;
        let d = LiveConfig::default();
        LiveConfig {
            endpoint: g.endpoint.clone().unwrap_or(d.endpoint),
            model: g.model.clone().unwrap_or(d.model),
            embed_model: g.embed_model.clone().unwrap_or(d.embed_model),
            api_key: None,
            timeout: Duration::from_secs_f64(g.timeout_secs),
            requests_per_second: g.requests_per_second,
            max_attempts: g.max_attempts,
            backoff_base: Duration::from_millis(g.backoff_ms),
        }
        .with_env_overrides()
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.tools,
            &mut self.docs,
            &mut self.queries,
            &mut self.gold_dependencies,
            &mut self.dependencies,
            &mut self.tool_graph,
            &mut self.doc_graph,
            &mut self.graph,
            &mut self.store,
            &mut self.fixtures,
            &mut self.artifacts,
            &mut self.reports,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// An input path that must be configured and exist.
pub fn input<'a>(field: &str, path: &'a Option<PathBuf>) -> Result<&'a Path, CliError> {
    let p = output(field, path)?;
    if !p.exists() {
        return Err(CliError::Config {
            field: field.into(),
            message: format!("{} does not exist", p.display()),
        });
    }
    Ok(p)
}

/// An output path that must be configured.
pub fn output<'a>(field: &str, path: &'a Option<PathBuf>) -> Result<&'a Path, CliError> {
    path.as_deref().ok_or_else(|| CliError::Config {
        field: field.into(),
        message: "not set (pass the flag or set it in the config file)".into(),
    })
}

/// Dotted `table.key` path of the line holding byte `offset`, best effort.
fn field_at(text: &str, offset: usize) -> String {
    let mut table = String::new();
    let mut key = String::new();
    for line in text[..offset.min(text.len())]
        .lines()
        .chain(text[offset.min(text.len())..].lines().take(1))
    {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            table = name.trim().to_string();
            key.clear();
        } else if let Some((k, _)) = t.split_once('=') {
            key = k.trim().to_string();
        }
    }
    match (table.is_empty(), key.is_empty()) {
        (_, true) if !table.is_empty() => table,
        (true, _) => key,
        _ => format!("{table}.{key}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<PipelineConfig, CliError> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, text).unwrap();
        PipelineConfig::load(&path)
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "[paths]\ntools = \"t.jsonl\"\nfixtures = \"/abs/f.jsonl\"\n",
        )
        .unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.paths.tools.unwrap(), dir.path().join("t.jsonl"));
        assert_eq!(cfg.paths.fixtures.unwrap(), PathBuf::from("/abs/f.jsonl"));
    }

    #[test]
    fn unknown_key_names_its_table() {
        match parse("[ppr]\ndampng = 0.5\n") {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "ppr.dampng"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn out_of_range_values_name_the_field() {
        let cfg = parse("[ppr]\ndamping = 1.5\n").unwrap();
        match cfg.validate() {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "ppr.damping"),
            other => panic!("{other:?}"),
        }
        let cfg = parse("[retrieval]\ntop_n = 0\n").unwrap();
        assert!(
            matches!(cfg.validate(), Err(CliError::Config { field, .. }) if field == "retrieval.top_n")
        );
        let cfg = parse("[gateway]\nmode = \"offline\"\n").unwrap();
        assert!(
            matches!(cfg.validate(), Err(CliError::Config { field, .. }) if field == "gateway.mode")
        );
    }

    #[test]
    fn defaults_match_library_defaults() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.retrieval_config().unwrap(), RetrievalConfig::default());
        assert_eq!(cfg.ppr_config().unwrap(), PprConfig::default());
        assert_eq!(cfg.mode().unwrap(), Mode::Stub);
    }

    #[test]
    fn missing_input_is_a_config_error() {
        let err = input("paths.tools", &None).unwrap_err();
        assert!(matches!(err, CliError::Config { ref field, .. } if field == "paths.tools"));
        let err = input("paths.tools", &Some(PathBuf::from("/nonexistent/t.jsonl"))).unwrap_err();
        assert!(err.to_string().contains("does not exist"));
    }
}
