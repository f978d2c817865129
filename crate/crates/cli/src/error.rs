use std::path::Path;

use thiserror::Error;
use toolweave::eval::EvalError;
use toolweave::extract::ExtractError;
use toolweave::gateway::{FixtureError, GatewayError};
use toolweave::graph::GraphError;
use toolweave::plan::PlanError;
use toolweave::retrieval::{EmbedError, RetrievalError, StoreError};
use toolweave::schema::SchemaError;
use toolweave::synth::SynthError;

/// Command failure, classified by exit code: 1 for bad input or
/// configuration, 2 for provider and filesystem failures.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at {field}: {message}")]
    Config { field: String, message: String },
    #[error("seed node {0} is not in the graph")]
    UnknownSeedNode(String),
    #[error("{0}")]
    Validation(String),
    #[error("gateway failure: {0}")]
    Gateway(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::UnknownSeedNode(_) | CliError::Validation(_) => 1,
            CliError::Gateway(_) | CliError::Io(_) => 2,
        }
    }

    /// Short machine-readable category for the summary line.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::UnknownSeedNode(_) => "unknown_seed_node",
            CliError::Validation(_) => "validation",
            CliError::Gateway(_) => "gateway",
            CliError::Io(_) => "io",
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        CliError::Gateway(e.to_string())
    }
}

impl From<FixtureError> for CliError {
    fn from(e: FixtureError) -> Self {
        match e {
            FixtureError::Read { .. } | FixtureError::Write { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SchemaError> for CliError {
    fn from(e: SchemaError) -> Self {
        match e {
            SchemaError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ExtractError> for CliError {
    fn from(e: ExtractError) -> Self {
        match e {
            ExtractError::Gateway { .. } => CliError::Gateway(e.to_string()),
            ExtractError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::UnknownSeedNode(id) => CliError::UnknownSeedNode(id.to_string()),
            GraphError::Extraction(_) => CliError::Gateway(e.to_string()),
            GraphError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Embed(EmbedError::Provider(_)) => CliError::Gateway(e.to_string()),
            RetrievalError::Store(s) => s.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::Gateway(_) => CliError::Gateway(e.to_string()),
            PlanError::Retrieval(r) => r.into(),
            PlanError::Graph(g) => g.into(),
            PlanError::StoreWrite(s) => s.into(),
            PlanError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InconsistentCounts { .. } => CliError::Validation(e.to_string()),
            EvalError::Io { .. } => CliError::Io(e.to_string()),
            EvalError::JudgeProtocol { .. } | EvalError::Gateway(_) => {
                CliError::Gateway(e.to_string())
            }
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InfeasibleSpec(_) => CliError::Validation(e.to_string()),
            SynthError::Graph(g) => g.into(),
            SynthError::Plan(p) => p.into(),
            SynthError::Retrieval(r) => r.into(),
            SynthError::Io { .. } => CliError::Io(e.to_string()),
        }
    }
}
