//! Document corpus to knowledge graph.
//!
//! Each document paragraph becomes a passage node. Entities are extracted per
//! passage by a pluggable [`EntityExtractor`]; the deterministic
//! [`HeuristicExtractor`] treats runs of capitalized words as entity mentions
//! and the words between two consecutive mentions in a sentence as the
//! predicate linking them.

use serde::{Deserialize, Serialize};

use super::{FusedGraph, GraphBuilder, GraphError, Node, NodeId, Relation, MENTIONED_IN};
use crate::gateway::{Gateway, GatewayRequest, Role};
use crate::ids::{normalize_tool_id, token_key};
use crate::jsonl;
use crate::schema::DocumentRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassageExtraction {
    /// Normalized entity labels, in order of first mention.
    pub entities: Vec<String>,
    pub triples: Vec<Triple>,
}

pub trait EntityExtractor {
    fn extract(&self, passage: &str) -> Result<PassageExtraction, GraphError>;
}

const STOPWORDS: &[&str] = &[
    "a", "after", "all", "also", "always", "an", "and", "as", "at", "before", "but", "by", "call",
    "each", "every", "finally", "first", "for", "from", "if", "in", "into", "is", "it", "its",
    "next", "never", "note", "of", "on", "once", "or", "please", "run", "the", "then", "these",
    "this", "those", "to", "use", "when", "where", "with",
];

#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicExtractor;

impl EntityExtractor for HeuristicExtractor {
    fn extract(&self, passage: &str) -> Result<PassageExtraction, GraphError> {
        Ok(heuristic_extract(passage))
    }
}

enum Piece {
    Entity(String),
    Word(String),
}

fn heuristic_extract(passage: &str) -> PassageExtraction {
    let mut out = PassageExtraction::default();
    for sentence in passage.split(['.', '!', '?', ';', '\n']) {
        let mut pieces: Vec<Piece> = Vec::new();
        let mut phrase: Vec<&str> = Vec::new();
        let flush = |phrase: &mut Vec<&str>, pieces: &mut Vec<Piece>| {
            if !phrase.is_empty() {
                if let Ok(label) = normalize_tool_id(&phrase.join(" ")) {
                    pieces.push(Piece::Entity(label));
                }
                phrase.clear();
            }
        };
        for raw in sentence.split_whitespace() {
            let word = raw.trim_matches(|c: char| !c.is_alphanumeric());
            if word.is_empty() {
                flush(&mut phrase, &mut pieces);
                continue;
            }
            let capitalized = word.chars().next().is_some_and(char::is_uppercase)
                && !STOPWORDS.contains(&word.to_lowercase().as_str());
            if capitalized {
                // A leading delimiter such as "(" starts a new phrase.
                if raw.starts_with(|c: char| !c.is_alphanumeric()) {
                    flush(&mut phrase, &mut pieces);
                }
                phrase.push(word);
            } else {
                flush(&mut phrase, &mut pieces);
                pieces.push(Piece::Word(word.to_string()));
            }
            // Trailing punctuation ("Order," or "Order)") ends the phrase.
            if raw.ends_with(|c: char| !c.is_alphanumeric()) {
                flush(&mut phrase, &mut pieces);
            }
        }
        flush(&mut phrase, &mut pieces);

        let mut last: Option<String> = None;
        let mut between: Vec<&str> = Vec::new();
        for piece in &pieces {
            match piece {
                Piece::Word(w) => between.push(w),
                Piece::Entity(label) => {
                    if !out.entities.contains(label) {
                        out.entities.push(label.clone());
                    }
                    if let Some(prev) = last.as_ref().filter(|p| *p != label) {
                        let key = token_key(&between.join(" "));
                        let predicate = if key.is_empty() {
                            "related_to".to_string()
                        } else {
                            key
                        };
                        let triple = Triple {
                            subject: prev.clone(),
                            predicate,
                            object: label.clone(),
                        };
                        if !out.triples.contains(&triple) {
                            out.triples.push(triple);
                        }
                    }
                    last = Some(label.clone());
                    between.clear();
                }
            }
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct ExtractPayload {
    instruction: String,
    passage: String,
}

pub const DEFAULT_EXTRACT_PROMPT: &str = "Extract the named entities of this passage and the (subject, predicate, \
    object) relations between them. Answer with JSON {\"entities\": [...], \"triples\": [{\"subject\", \
    \"predicate\", \"object\"}]}.";

/// Delegates extraction to the gateway (`extract` role).
pub struct GatewayExtractor<'a> {
    pub gateway: &'a Gateway,
    pub instruction: String,
}

impl<'a> GatewayExtractor<'a> {
    pub fn new(gateway: &'a Gateway) -> Self {
        Self {
            gateway,
            instruction: DEFAULT_EXTRACT_PROMPT.to_string(),
        }
    }
}

impl EntityExtractor for GatewayExtractor<'_> {
    fn extract(&self, passage: &str) -> Result<PassageExtraction, GraphError> {
        let payload = ExtractPayload {
            instruction: self.instruction.clone(),
            passage: passage.to_string(),
        };
        let req = GatewayRequest::new(Role::Extract, jsonl::to_line(&payload));
        let raw = self
            .gateway
            .complete(&req)
            .map_err(|e| GraphError::Extraction(e.to_string()))?;
        let mut parsed: PassageExtraction = serde_json::from_str(raw.trim())
            .map_err(|e| GraphError::Extraction(format!("unparseable response: {e}")))?;
        let norm = |s: &str| normalize_tool_id(s).ok();
        parsed.entities = parsed.entities.iter().filter_map(|e| norm(e)).collect();
        parsed.triples = parsed
            .triples
            .into_iter()
            .filter_map(|t| {
                Some(Triple {
                    subject: norm(&t.subject)?,
                    predicate: norm(&t.predicate)?,
                    object: norm(&t.object)?,
                })
            })
            .collect();
        Ok(parsed)
    }
}

pub(crate) fn stub_extract(payload: &str) -> Result<String, String> {
    let p: ExtractPayload = serde_json::from_str(payload).map_err(|e| e.to_string())?;
    Ok(jsonl::to_line(&heuristic_extract(&p.passage)))
}

/// Paragraphs of `body` with their byte spans; blank lines separate paragraphs.
fn paragraphs(body: &str) -> Vec<(usize, usize, &str)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut end = 0;
    let mut offset = 0;
    for line in body.split_inclusive('\n') {
        let content = line.trim_end_matches(['\n', '\r']);
        if content.trim().is_empty() {
            if let Some(s) = start.take() {
                out.push((s, end, &body[s..end]));
            }
        } else {
            if start.is_none() {
                start = Some(offset);
            }
            end = offset + content.len();
        }
        offset += line.len();
    }
    if let Some(s) = start {
        out.push((s, end, &body[s..end]));
    }
    out
}

/// Builds the document-only graph: passages, entities, `mentioned_in`
/// membership edges (entity to passage) and extracted triples.
pub fn ingest_document_graph(
    docs: &[DocumentRecord],
    extractor: &dyn EntityExtractor,
) -> Result<FusedGraph, GraphError> {
    let mut b = GraphBuilder::new();
    let membership = Relation::DocTriple(MENTIONED_IN.to_string());
    for doc in docs {
        let paras = paragraphs(&doc.body);
        for (i, (start, end, text)) in paras.iter().enumerate() {
            let passage = Node::passage(&doc.doc_id, i, *start, *end, text);
            let pid = passage.id.clone();
            b.add_node(passage);
            let extraction = extractor.extract(text)?;
            for label in &extraction.entities {
                b.add_node(Node::entity(label));
                b.union_edge(NodeId::entity(label), pid.clone(), membership.clone(), 1.0);
            }
            for t in &extraction.triples {
                b.add_node(Node::entity(&t.subject));
                b.add_node(Node::entity(&t.object));
                b.add_edge(
                    NodeId::entity(&t.subject),
                    NodeId::entity(&t.object),
                    Relation::DocTriple(t.predicate.clone()),
                    1.0,
                );
            }
            if i == 0 {
                for tool in &doc.referenced_tools {
                    b.add_node(Node::entity(tool));
                    b.union_edge(NodeId::entity(tool), pid.clone(), membership.clone(), 1.0);
                }
            }
        }
    }
    b.build()
}
