//! Tool schemas, query sets and document corpora.
//!
//! All three inputs are line-delimited JSON, one record per line. Tool names
//! are canonicalized with [`normalize_tool_id`] on the way in; gold plans and
//! document tool references are normalized the same way so they join cleanly.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::ids::normalize_tool_id;
use crate::jsonl;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("tool record at line {line} has an empty name")]
    EmptyToolName { line: usize },
    #[error("tool {tool}: duplicate argument name {name:?}")]
    DuplicateArgumentName { tool: String, name: String },
    #[error("tool {tool}: duplicate output payload field {name:?}")]
    DuplicatePayloadField { tool: String, name: String },
    #[error("tool {tool}: argument or payload field with empty name")]
    EmptyFieldName { tool: String },
    #[error("malformed record at {detail}")]
    MalformedRecord { line: usize, detail: String },
    #[error("duplicate tool id {tool_id:?} at line {line}")]
    DuplicateToolId { tool_id: String, line: usize },
    #[error("duplicate document id {doc_id:?} at line {line}")]
    DuplicateDocId { doc_id: String, line: usize },
    #[error("unknown query level {value:?} (expected G1, G2 or G3)")]
    UnknownLevel { value: String },
    #[error("requested {requested} records but only {available} are available")]
    NotEnoughRecords { requested: usize, available: usize },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = SchemaError> = std::result::Result<T, E>;

/// Coarse type vocabulary used for dependency compatibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypeTag {
    String,
    Integer,
    Number,
    Boolean,
    List,
    Object,
    Unknown,
}

impl TypeTag {
    /// Maps a source-schema type annotation onto the fixed vocabulary.
    /// Absent annotations become `Unknown`; unrecognized richer types
    /// (`date`, `email`, ...) become `String`.
    pub fn from_annotation(annotation: Option<&str>) -> Self {
        let Some(raw) = annotation else {
            return TypeTag::Unknown;
        };
        match raw.trim().to_ascii_lowercase().as_str() {
            "" | "unknown" | "any" => TypeTag::Unknown,
            "integer" | "int" | "int32" | "int64" | "long" => TypeTag::Integer,
            "number" | "float" | "double" | "decimal" => TypeTag::Number,
            "boolean" | "bool" => TypeTag::Boolean,
            "list" | "array" => TypeTag::List,
            "object" | "dict" | "map" => TypeTag::Object,
            _ => TypeTag::String,
        }
    }

    /// Equal tags are compatible, and `Unknown` is compatible with anything.
    pub fn compatible(self, other: TypeTag) -> bool {
        self == other || self == TypeTag::Unknown || other == TypeTag::Unknown
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TypeTag::String => "string",
            TypeTag::Integer => "integer",
            TypeTag::Number => "number",
            TypeTag::Boolean => "boolean",
            TypeTag::List => "list",
            TypeTag::Object => "object",
            TypeTag::Unknown => "unknown",
        }
    }
}

impl fmt::Display for TypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgumentSpec {
    pub name: String,
    pub type_tag: TypeTag,
    pub required: bool,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PayloadField {
    pub name: String,
    pub type_tag: TypeTag,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolSchema {
    pub tool_id: String,
    pub name: String,
    pub description: String,
    pub arguments: Vec<ArgumentSpec>,
    pub output_payload: Vec<PayloadField>,
}

impl ToolSchema {
    pub fn argument(&self, name: &str) -> Option<&ArgumentSpec> {
        self.arguments.iter().find(|a| a.name == name)
    }

    pub fn payload_field(&self, name: &str) -> Option<&PayloadField> {
        self.output_payload.iter().find(|f| f.name == name)
    }

    /// Serializes back into the corpus record format (one JSON object).
    pub fn to_record(&self) -> ToolRecord {
        ToolRecord {
            name: Some(self.name.clone()),
            description: self.description.clone(),
            arguments: self
                .arguments
                .iter()
                .map(|a| ArgumentRecord {
                    name: a.name.clone(),
                    type_: Some(a.type_tag.as_str().to_string()),
                    required: a.required,
                    description: a.description.clone(),
                })
                .collect(),
            output_payload: self
                .output_payload
                .iter()
                .map(|f| PayloadRecord {
                    name: f.name.clone(),
                    type_: Some(f.type_tag.as_str().to_string()),
                    description: f.description.clone(),
                })
                .collect(),
        }
    }

    pub fn to_line(&self) -> String {
        jsonl::to_line(&self.to_record())
    }
}

/// Wire form of a tool schema record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolRecord {
    pub name: Option<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub arguments: Vec<ArgumentRecord>,
    #[serde(default)]
    pub output_payload: Vec<PayloadRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgumentRecord {
    #[serde(default)]
    pub name: String,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub type_: Option<String>,
    #[serde(default)]
    pub required: bool,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadRecord {
    #[serde(default)]
    pub name: String,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub type_: Option<String>,
    #[serde(default)]
    pub description: String,
}

impl ToolRecord {
    pub fn into_schema(self, line: usize) -> Result<ToolSchema> {
        let name = self.name.ok_or_else(|| SchemaError::MalformedRecord {
            line,
            detail: format!("line {line}: missing field `name`"),
        })?;
        let tool_id = normalize_tool_id(&name).map_err(|_| SchemaError::EmptyToolName { line })?;

        let mut seen = HashSet::new();
        let mut arguments = Vec::with_capacity(self.arguments.len());
        for a in self.arguments {
            let arg_name = a.name.trim().to_string();
            if arg_name.is_empty() {
                return Err(SchemaError::EmptyFieldName { tool: tool_id });
            }
            if !seen.insert(arg_name.clone()) {
                return Err(SchemaError::DuplicateArgumentName {
                    tool: tool_id,
                    name: arg_name,
                });
            }
            arguments.push(ArgumentSpec {
                name: arg_name,
                type_tag: TypeTag::from_annotation(a.type_.as_deref()),
                required: a.required,
                description: a.description,
            });
        }

        seen.clear();
        let mut output_payload = Vec::with_capacity(self.output_payload.len());
        for f in self.output_payload {
            let field_name = f.name.trim().to_string();
            if field_name.is_empty() {
                return Err(SchemaError::EmptyFieldName { tool: tool_id });
            }
            if !seen.insert(field_name.clone()) {
                return Err(SchemaError::DuplicatePayloadField {
                    tool: tool_id,
                    name: field_name,
                });
            }
            output_payload.push(PayloadField {
                name: field_name,
                type_tag: TypeTag::from_annotation(f.type_.as_deref()),
                description: f.description,
            });
        }

        Ok(ToolSchema {
            tool_id,
            name,
            description: self.description,
            arguments,
            output_payload,
        })
    }
}

/// Parses a single tool record (one JSON object).
pub fn parse_tool_schema(raw: &str) -> Result<ToolSchema> {
    parse_tool_line(&jsonl::Line {
        number: 1,
        text: raw,
    })
}

fn parse_tool_line(line: &jsonl::Line<'_>) -> Result<ToolSchema> {
    let record: ToolRecord =
        jsonl::parse_line(line).map_err(|detail| SchemaError::MalformedRecord {
            line: line.number,
            detail,
        })?;
    record.into_schema(line.number)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| SchemaError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A validated set of tool schemas, sorted by tool id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ToolCorpus {
    tools: Vec<ToolSchema>,
    index: HashMap<String, usize>,
}

impl ToolCorpus {
    pub fn new(mut tools: Vec<ToolSchema>) -> Result<Self> {
        tools.sort_by(|a, b| a.tool_id.cmp(&b.tool_id));
        let mut index = HashMap::with_capacity(tools.len());
        for (i, t) in tools.iter().enumerate() {
            if index.insert(t.tool_id.clone(), i).is_some() {
                return Err(SchemaError::DuplicateToolId {
                    tool_id: t.tool_id.clone(),
                    line: 0,
                });
            }
        }
        Ok(Self { tools, index })
    }

    pub fn get(&self, tool_id: &str) -> Option<&ToolSchema> {
        self.index.get(tool_id).map(|&i| &self.tools[i])
    }

    pub fn contains(&self, tool_id: &str) -> bool {
        self.index.contains_key(tool_id)
    }

    pub fn tools(&self) -> &[ToolSchema] {
        &self.tools
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        jsonl::join_lines(self.tools.iter().map(ToolSchema::to_line))
    }
}

pub fn parse_tool_corpus(content: &str) -> Result<ToolCorpus> {
    let mut tools = Vec::new();
    let mut lines_by_id: HashMap<String, usize> = HashMap::new();
    for line in jsonl::lines(content) {
        let tool = parse_tool_line(&line)?;
        if lines_by_id
            .insert(tool.tool_id.clone(), line.number)
            .is_some()
        {
            return Err(SchemaError::DuplicateToolId {
                tool_id: tool.tool_id,
                line: line.number,
            });
        }
        tools.push(tool);
    }
    ToolCorpus::new(tools)
}

pub fn load_tool_corpus(path: &Path) -> Result<ToolCorpus> {
    parse_tool_corpus(&read(path)?)
}

/// ToolBench-style instruction level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    G1,
    G2,
    G3,
}

impl FromStr for Level {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "G1" => Ok(Level::G1),
            "G2" => Ok(Level::G2),
            "G3" => Ok(Level::G3),
            _ => Err(SchemaError::UnknownLevel {
                value: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::G1 => "G1",
            Level::G2 => "G2",
            Level::G3 => "G3",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldStep {
    #[serde(rename = "tool")]
    pub tool_id: String,
    #[serde(default)]
    pub arguments: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GoldDependency {
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldPlan {
    pub steps: Vec<GoldStep>,
    #[serde(rename = "dependencies", default)]
    pub gold_dependencies: Vec<GoldDependency>,
}

impl GoldPlan {
    fn normalize(&mut self) {
        let norm = |s: &mut String| {
            if let Ok(n) = normalize_tool_id(s) {
                *s = n;
            }
        };
        for step in &mut self.steps {
            norm(&mut step.tool_id);
        }
        for dep in &mut self.gold_dependencies {
            norm(&mut dep.source);
            norm(&mut dep.target);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
    pub level: Level,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_plan: Option<GoldPlan>,
}

#[derive(Deserialize)]
struct RawQuery {
    query_id: String,
    text: String,
    level: String,
    #[serde(default)]
    gold_plan: Option<GoldPlan>,
}

/// Parses every query record in `content`, regardless of level.
pub fn parse_queries(content: &str) -> Result<Vec<QueryRecord>> {
    let mut out = Vec::new();
    for line in jsonl::lines(content) {
        let raw: RawQuery =
            jsonl::parse_line(&line).map_err(|detail| SchemaError::MalformedRecord {
                line: line.number,
                detail,
            })?;
        let level = raw.level.parse()?;
        let mut gold_plan = raw.gold_plan;
        if let Some(plan) = gold_plan.as_mut() {
            plan.normalize();
        }
        out.push(QueryRecord {
            query_id: raw.query_id,
            text: raw.text,
            level,
            gold_plan,
        });
    }
    Ok(out)
}

pub fn load_queries(path: &Path) -> Result<Vec<QueryRecord>> {
    parse_queries(&read(path)?)
}

pub fn queries_to_jsonl(queries: &[QueryRecord]) -> String {
    jsonl::join_lines(queries.iter().map(jsonl::to_line))
}

/// Loads the records of `level` from `path` and draws a seeded sample of
/// `sample_n` of them without replacement.
pub fn load_query_set(
    path: &Path,
    level: Level,
    sample_n: usize,
    rng_seed: u64,
) -> Result<Vec<QueryRecord>> {
    let all = load_queries(path)?;
    let pool: Vec<QueryRecord> = all.into_iter().filter(|q| q.level == level).collect();
    sample_records(pool, sample_n, rng_seed)
}

/// Seeded partial Fisher-Yates. Draws are taken as `u64` so the sample does
/// not depend on the platform's pointer width.
pub fn sample_records<T>(pool: Vec<T>, sample_n: usize, rng_seed: u64) -> Result<Vec<T>> {
    let available = pool.len();
    if sample_n > available {
        return Err(SchemaError::NotEnoughRecords {
            requested: sample_n,
            available,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut slots: Vec<Option<T>> = pool.into_iter().map(Some).collect();
    let mut order: Vec<usize> = (0..available).collect();
    for i in 0..sample_n {
        let span = (available - i) as u64;
        let j = i + rng.random_range(0..span) as usize;
        order.swap(i, j);
    }
    Ok(order[..sample_n]
        .iter()
        .map(|&i| slots[i].take().expect("indices are distinct"))
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GoldFilterReport {
    pub kept: usize,
    pub unresolvable_tool: usize,
    pub empty_plan: usize,
    pub self_dependency: usize,
}

impl GoldFilterReport {
    pub fn dropped(&self) -> usize {
        self.unresolvable_tool + self.empty_plan + self.self_dependency
    }
}

/// Drops queries whose gold plan names an unknown tool, has no steps, or
/// lists a self-dependency. Queries without a gold plan are kept.
pub fn retain_valid_gold_plans(
    queries: Vec<QueryRecord>,
    tools: &ToolCorpus,
) -> (Vec<QueryRecord>, GoldFilterReport) {
    let mut report = GoldFilterReport::default();
    let mut kept = Vec::with_capacity(queries.len());
    for q in queries {
        if let Some(plan) = &q.gold_plan {
            if plan.steps.is_empty() {
                report.empty_plan += 1;
                continue;
            }
            let resolves = plan.steps.iter().all(|s| tools.contains(&s.tool_id))
                && plan
                    .gold_dependencies
                    .iter()
                    .all(|d| tools.contains(&d.source) && tools.contains(&d.target));
            if !resolves {
                report.unresolvable_tool += 1;
                continue;
            }
            if plan.gold_dependencies.iter().any(|d| d.source == d.target) {
                report.self_dependency += 1;
                continue;
            }
        }
        kept.push(q);
    }
    report.kept = kept.len();
    if report.dropped() > 0 {
        warn!(
            dropped = report.dropped(),
            unresolvable = report.unresolvable_tool,
            empty = report.empty_plan,
            self_dependency = report.self_dependency,
            "dropped queries with invalid gold plans"
        );
    }
    (kept, report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub referenced_tools: Vec<String>,
}

pub fn parse_documents(content: &str) -> Result<Vec<DocumentRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in jsonl::lines(content) {
        let mut doc: DocumentRecord =
            jsonl::parse_line(&line).map_err(|detail| SchemaError::MalformedRecord {
                line: line.number,
                detail,
            })?;
        if !seen.insert(doc.doc_id.clone()) {
            return Err(SchemaError::DuplicateDocId {
                doc_id: doc.doc_id,
                line: line.number,
            });
        }
        doc.referenced_tools = doc
            .referenced_tools
            .iter()
            .filter_map(|t| normalize_tool_id(t).ok())
            .collect();
        out.push(doc);
    }
    Ok(out)
}

pub fn load_documents(path: &Path) -> Result<Vec<DocumentRecord>> {
    parse_documents(&read(path)?)
}

pub fn documents_to_jsonl(docs: &[DocumentRecord]) -> String {
    jsonl::join_lines(docs.iter().map(jsonl::to_line))
}

/// Reads `{"source", "target"}` records as normalized tool id pairs.
pub fn parse_gold_dependencies(content: &str) -> Result<BTreeSet<(String, String)>> {
    let mut out = BTreeSet::new();
    for line in jsonl::lines(content) {
        let dep: GoldDependency =
            jsonl::parse_line(&line).map_err(|detail| SchemaError::MalformedRecord {
                line: line.number,
                detail,
            })?;
        let norm = |s: &str| {
            normalize_tool_id(s).map_err(|e| SchemaError::MalformedRecord {
                line: line.number,
                detail: e.to_string(),
            })
        };
        out.insert((norm(&dep.source)?, norm(&dep.target)?));
    }
    Ok(out)
}

pub fn load_gold_dependencies(path: &Path) -> Result<BTreeSet<(String, String)>> {
    parse_gold_dependencies(&read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GET_ORDER: &str = r#"{"name":"GetOrder","description":"Fetch an order","arguments":[{"name":"order_id","type":"string","required":true,"description":"id"}],"output_payload":[{"name":"status","type":"string","description":"order status"}]}"#;

    #[test]
    fn parses_direct_mapping() {
        let t = parse_tool_schema(GET_ORDER).unwrap();
        assert_eq!(t.tool_id, "getorder");
        assert_eq!(t.name, "GetOrder");
        assert_eq!(t.arguments.len(), 1);
        assert_eq!(t.output_payload.len(), 1);
        assert!(t.arguments[0].required);
        assert_eq!(t.arguments[0].type_tag, TypeTag::String);
    }

    #[test]
    fn duplicate_argument_rejected() {
        let raw = r#"{"name":"X","arguments":[{"name":"id"},{"name":"id","type":"integer"}]}"#;
        assert!(
            matches!(parse_tool_schema(raw), Err(SchemaError::DuplicateArgumentName { name, .. }) if name == "id")
        );
    }

    #[test]
    fn duplicate_payload_field_rejected() {
        let raw = r#"{"name":"X","output_payload":[{"name":"a"},{"name":"a"}]}"#;
        assert!(matches!(
            parse_tool_schema(raw),
            Err(SchemaError::DuplicatePayloadField { .. })
        ));
    }

    #[test]
    fn missing_type_defaults_to_unknown() {
        let fixture = include_str!("../tests/fixtures/untyped_tool.jsonl");
        let corpus = parse_tool_corpus(fixture).unwrap();
        let tool = corpus.get("lookup_customer").unwrap();
        assert_eq!(tool.argument("email").unwrap().type_tag, TypeTag::Unknown);
        assert_eq!(
            tool.argument("since").unwrap().type_tag,
            TypeTag::String,
            "date maps to string"
        );
    }

    #[test]
    fn empty_name_and_missing_name() {
        assert!(matches!(
            parse_tool_schema(r#"{"name":"  ?? "}"#),
            Err(SchemaError::EmptyToolName { .. })
        ));
        assert!(matches!(
            parse_tool_schema(r#"{"description":"x"}"#),
            Err(SchemaError::MalformedRecord { .. })
        ));
    }

    #[test]
    fn malformed_record_reports_line() {
        let content = format!("{GET_ORDER}\n\n{{\"name\": \n");
        match parse_tool_corpus(&content) {
            Err(SchemaError::MalformedRecord { line, detail }) => {
                assert_eq!(line, 3);
                assert!(detail.contains("line 3"), "{detail}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_tool_ids_after_normalization() {
        let content = "{\"name\":\"Get Order\"}\n{\"name\":\"get_order\"}\n";
        assert!(matches!(
            parse_tool_corpus(content),
            Err(SchemaError::DuplicateToolId { line: 2, .. })
        ));
    }

    fn ten_g1() -> String {
        let mut s = String::new();
        for i in 0..10 {
            s.push_str(&format!(
                "{{\"query_id\":\"q{i}\",\"text\":\"t{i}\",\"level\":\"G1\"}}\n"
            ));
        }
        s.push_str("{\"query_id\":\"x\",\"text\":\"other\",\"level\":\"G2\"}\n");
        s
    }

    #[test]
    fn sample_whole_population_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.jsonl");
        fs::write(&path, ten_g1()).unwrap();

        let all = load_query_set(&path, Level::G1, 10, 1).unwrap();
        let mut ids: Vec<_> = all.iter().map(|q| q.query_id.clone()).collect();
        ids.sort();
        assert_eq!(ids.len(), 10);
        assert!(all.iter().all(|q| q.level == Level::G1));
        assert_eq!(all, load_query_set(&path, Level::G1, 10, 1).unwrap());

        let a = load_query_set(&path, Level::G1, 3, 42).unwrap();
        let b = load_query_set(&path, Level::G1, 3, 42).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a, b);
    }

    #[test]
    fn sample_is_frozen_across_platforms() {
        // ChaCha8 with u64 draws; frozen from a reference run.
        let picked = sample_records((0..10).collect(), 3, 42).unwrap();
        assert_eq!(picked, FROZEN_SAMPLE_42);
    }

    const FROZEN_SAMPLE_42: [i32; 3] = [6, 9, 5];

    #[test]
    fn not_enough_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.jsonl");
        fs::write(&path, "{\"query_id\":\"a\",\"text\":\"a\",\"level\":\"G3\"}\n{\"query_id\":\"b\",\"text\":\"b\",\"level\":\"G3\"}\n").unwrap();
        assert!(matches!(
            load_query_set(&path, Level::G3, 5, 0),
            Err(SchemaError::NotEnoughRecords {
                requested: 5,
                available: 2
            })
        ));
    }

    #[test]
    fn unknown_level() {
        assert!(matches!(
            "G4".parse::<Level>(),
            Err(SchemaError::UnknownLevel { .. })
        ));
        assert!(matches!(
            parse_queries("{\"query_id\":\"a\",\"text\":\"a\",\"level\":\"G9\"}"),
            Err(SchemaError::UnknownLevel { .. })
        ));
    }

    #[test]
    fn gold_filter_drops_invalid_cases() {
        let corpus = parse_tool_corpus("{\"name\":\"A\"}\n{\"name\":\"B\"}\n").unwrap();
        let q = |id: &str, plan: &str| {
            format!(
                "{{\"query_id\":\"{id}\",\"text\":\"t\",\"level\":\"G2\",\"gold_plan\":{plan}}}\n"
            )
        };
        let mut content = String::new();
        content += &q(
            "ok",
            r#"{"steps":[{"tool":"A"},{"tool":"B"}],"dependencies":[{"source":"A","target":"B"}]}"#,
        );
        content += &q("unk", r#"{"steps":[{"tool":"Zed"}]}"#);
        content += &q("empty", r#"{"steps":[]}"#);
        content += &q(
            "self",
            r#"{"steps":[{"tool":"a"}],"dependencies":[{"source":"a","target":"A"}]}"#,
        );
        content += "{\"query_id\":\"nogold\",\"text\":\"t\",\"level\":\"G2\"}\n";
        let (kept, report) = retain_valid_gold_plans(parse_queries(&content).unwrap(), &corpus);
        let ids: Vec<_> = kept.iter().map(|q| q.query_id.as_str()).collect();
        assert_eq!(ids, ["ok", "nogold"]);
        assert_eq!(
            report,
            GoldFilterReport {
                kept: 2,
                unresolvable_tool: 1,
                empty_plan: 1,
                self_dependency: 1
            }
        );
    }

    #[test]
    fn duplicate_doc_ids() {
        let content = "{\"doc_id\":\"d\",\"body\":\"x\"}\n{\"doc_id\":\"d\",\"body\":\"y\"}\n";
        assert!(matches!(
            parse_documents(content),
            Err(SchemaError::DuplicateDocId { line: 2, .. })
        ));
        let docs = parse_documents(
            "{\"doc_id\":\"d\",\"body\":\"x\",\"referenced_tools\":[\"Backlog Check\"]}",
        )
        .unwrap();
        assert_eq!(docs[0].referenced_tools, ["backlog_check"]);
    }

    fn type_tag() -> impl Strategy<Value = TypeTag> {
        prop_oneof![
            Just(TypeTag::String),
            Just(TypeTag::Integer),
            Just(TypeTag::Number),
            Just(TypeTag::Boolean),
            Just(TypeTag::List),
            Just(TypeTag::Object),
            Just(TypeTag::Unknown),
        ]
    }

    prop_compose! {
        fn tool_schema()(
            name in "[A-Z][a-z]{1,8}( [A-Z][a-z]{1,8}){0,2}",
            description in "[ -~]{0,30}",
            args in proptest::collection::btree_map("[a-z_]{1,8}", (type_tag(), any::<bool>(), "[ -~]{0,10}"), 0..4),
            fields in proptest::collection::btree_map("[a-z_]{1,8}", (type_tag(), "[ -~]{0,10}"), 0..4),
        ) -> ToolSchema {
            let args = args.into_iter().filter(|(n, _)| !n.trim().is_empty()).map(|(name, (type_tag, required, description))| ArgumentSpec { name, type_tag, required, description }).collect();
            let fields = fields.into_iter().filter(|(n, _)| !n.trim().is_empty()).map(|(name, (type_tag, description))| PayloadField { name, type_tag, description }).collect();
            ToolSchema { tool_id: normalize_tool_id(&name).unwrap(), name, description, arguments: args, output_payload: fields }
        }
    }

    proptest! {
        #[test]
        fn schema_round_trips(tool in tool_schema()) {
            let line = tool.to_line();
            let back = parse_tool_schema(&line).unwrap();
            prop_assert_eq!(&back, &tool);
            prop_assert_eq!(back.to_line(), line);
        }
    }
}
