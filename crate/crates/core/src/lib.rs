//! Tool-dependency graphs and graph-guided plan generation.
//!
//! The pipeline ingests tool schemas, extracts field-level dependencies
//! between tools, fuses them with a document knowledge graph, retrieves a
//! query-specific subgraph with dense retrieval plus personalized PageRank,
//! and asks a language model for a dependency-aware execution plan.

pub mod eval;
pub mod extract;
pub mod gateway;
pub mod graph;
pub mod ids;
mod jsonl;
mod par;
pub mod plan;
pub mod retrieval;
pub mod schema;
pub mod synth;

pub use jsonl::write_text;
