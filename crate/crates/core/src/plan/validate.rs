use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::PlanArtifact;
use crate::graph::FusedGraph;
use crate::schema::ToolCorpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// The generator output could not be parsed as a plan at all.
    Malformed,
    EmptyPlan,
    BadStepIndex,
    UnknownTool,
    UnknownArgument,
    UnknownStep,
    ForwardReference,
    UnknownOutputField,
    TypeMismatch,
    Cycle,
    MissingGraphEdge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    pub message: String,
}

impl Violation {
    pub fn new(kind: ViolationKind, step: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            kind,
            step,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Structural checks on a plan. With `strict_graph` set, every cross-step
/// reference must also be backed by a dependency edge in that graph.
pub fn validate_plan(
    artifact: &PlanArtifact,
    tools: &ToolCorpus,
    strict_graph: Option<&FusedGraph>,
) -> Vec<Violation> {
    let mut out = Vec::new();
    if artifact.steps.is_empty() {
        out.push(Violation::new(
            ViolationKind::EmptyPlan,
            None,
            "plan has no steps",
        ));
        return out;
    }

    let mut by_index: BTreeMap<usize, &str> = BTreeMap::new();
    for (pos, step) in artifact.steps.iter().enumerate() {
        if step.step_index != pos + 1 {
            out.push(Violation::new(
                ViolationKind::BadStepIndex,
                Some(step.step_index),
                format!("step at position {} has index {}", pos + 1, step.step_index),
            ));
        }
        if by_index
            .insert(step.step_index, step.tool_id.as_str())
            .is_some()
        {
            out.push(Violation::new(
                ViolationKind::BadStepIndex,
                Some(step.step_index),
                format!("step index {} used twice", step.step_index),
            ));
        }
    }

    let mut edges: Vec<(usize, usize)> = Vec::new();
    for step in &artifact.steps {
        let i = step.step_index;
        let schema = tools.get(&step.tool_id);
        if schema.is_none() {
            out.push(Violation::new(
                ViolationKind::UnknownTool,
                Some(i),
                format!("unknown tool {}", step.tool_id),
            ));
        }

        let referenced: BTreeSet<usize> = step.references().map(|(_, s, _)| s).collect();
        for &d in step.depends_on.union(&referenced) {
            if !by_index.contains_key(&d) {
                out.push(Violation::new(
                    ViolationKind::UnknownStep,
                    Some(i),
                    format!("step {i} depends on missing step {d}"),
                ));
            } else if d >= i {
                out.push(Violation::new(
                    ViolationKind::ForwardReference,
                    Some(i),
                    format!("forward reference: step {i} depends on step {d}"),
                ));
                edges.push((d, i));
            } else {
                edges.push((d, i));
            }
        }

        let Some(schema) = schema else { continue };
        for (arg, binding) in &step.argument_bindings {
            let spec = schema.argument(arg);
            if spec.is_none() {
                out.push(Violation::new(
                    ViolationKind::UnknownArgument,
                    Some(i),
                    format!("unknown argument {arg} on {}", schema.tool_id),
                ));
            }
            let super::Binding::Ref { step: r, field } = binding else {
                continue;
            };
            if *r >= i {
                continue;
            }
            let Some(src_tool) = by_index.get(r).and_then(|t| tools.get(t)) else {
                continue;
            };
            let Some(payload) = src_tool.payload_field(field) else {
                out.push(Violation::new(
                    ViolationKind::UnknownOutputField,
                    Some(i),
                    format!("unknown output field {field} on {}", src_tool.tool_id),
                ));
                continue;
            };
            if let Some(spec) = spec {
                if !payload.type_tag.compatible(spec.type_tag) {
                    out.push(Violation::new(
                        ViolationKind::TypeMismatch,
                        Some(i),
                        format!(
                            "type mismatch: {}.{field} is {} but {}.{arg} expects {}",
                            src_tool.tool_id, payload.type_tag, schema.tool_id, spec.type_tag
                        ),
                    ));
                }
            }
            if let Some(g) = strict_graph {
                if !g.has_dependency(&src_tool.tool_id, &schema.tool_id) {
                    out.push(Violation::new(
                        ViolationKind::MissingGraphEdge,
                        Some(i),
                        format!(
                            "no dependency edge {} -> {} in graph",
                            src_tool.tool_id, schema.tool_id
                        ),
                    ));
                }
            }
        }
    }

    if has_cycle(&by_index.keys().copied().collect::<Vec<_>>(), &edges) {
        out.push(Violation::new(
            ViolationKind::Cycle,
            None,
            "dependency wiring contains a cycle",
        ));
    }
    out
}

/// Kahn's algorithm; true if some node never reaches in-degree zero.
fn has_cycle(nodes: &[usize], edges: &[(usize, usize)]) -> bool {
    let mut indegree: BTreeMap<usize, usize> = nodes.iter().map(|&n| (n, 0)).collect();
    let mut succ: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(a, b) in edges {
        *indegree.entry(b).or_default() += 1;
        indegree.entry(a).or_default();
        succ.entry(a).or_default().push(b);
    }
    let mut ready: Vec<usize> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&n, _)| n)
        .collect();
    let mut seen = 0;
    while let Some(n) = ready.pop() {
        seen += 1;
        for &m in succ.get(&n).map(Vec::as_slice).unwrap_or_default() {
            let d = indegree.get_mut(&m).expect("node registered");
            *d -= 1;
            if *d == 0 {
                ready.push(m);
            }
        }
    }
    seen < indegree.len()
}
