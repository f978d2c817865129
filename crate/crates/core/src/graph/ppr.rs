//! Personalized PageRank by power iteration.
//!
//! `p <- (1-d)*s + d*(W^T p + m*s)` where `W` is the row-normalized weighted
//! adjacency, `s` the seed distribution and `m` the mass sitting on nodes
//! without outgoing weight (teleported back to the seeds).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{FusedGraph, GraphError, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DanglingPolicy {
    ToSeeds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeDirection {
    AsIs,
    Symmetrize,
}

impl std::str::FromStr for EdgeDirection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "as_is" => Ok(EdgeDirection::AsIs),
            "symmetrize" => Ok(EdgeDirection::Symmetrize),
            other => Err(format!(
                "unknown edge direction {other:?} (expected as_is or symmetrize)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PprConfig {
    pub damping: f64,
    /// Stop once the L1 change between iterates is at most this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub dangling_policy: DanglingPolicy,
    pub edge_direction: EdgeDirection,
}

impl Default for PprConfig {
    fn default() -> Self {
        Self {
            damping: 0.85,
            tolerance: 1e-8,
            max_iterations: 100,
            dangling_policy: DanglingPolicy::ToSeeds,
            edge_direction: EdgeDirection::Symmetrize,
        }
    }
}

impl PprConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(GraphError::InvalidConfig(format!(
                "damping must be in (0,1), got {}",
                self.damping
            )));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(GraphError::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(GraphError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Scores aligned with the graph's canonical node order.
#[derive(Debug, Clone, PartialEq)]
pub struct PprResult {
    pub scores: Vec<f64>,
    pub iterations: usize,
    /// L1 change of the last iteration.
    pub residual: f64,
    /// `false` when `max_iterations` was hit first; `scores` is then the last iterate.
    pub converged: bool,
}

impl PprResult {
    pub fn score(&self, graph: &FusedGraph, id: &NodeId) -> Option<f64> {
        graph.index_of(id).map(|i| self.scores[i])
    }

    pub fn to_map(&self, graph: &FusedGraph) -> BTreeMap<NodeId, f64> {
        graph
            .nodes()
            .iter()
            .zip(&self.scores)
            .map(|(n, &s)| (n.id.clone(), s))
            .collect()
    }

    /// Node indices by descending score, ties broken by canonical id order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx
    }
}

const SEED_SUM_TOLERANCE: f64 = 1e-12;

/// Row-normalized transition lists `(target, probability)` per node.
fn transitions(graph: &FusedGraph, direction: EdgeDirection) -> Vec<Vec<(usize, f64)>> {
    let n = graph.node_count();
    let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for e in 0..graph.edge_count() {
        let (s, d) = graph.edge_endpoints(e);
        let w = graph.edges()[e].weight;
        *rows[s].entry(d).or_insert(0.0) += w;
        if direction == EdgeDirection::Symmetrize && s != d {
            *rows[d].entry(s).or_insert(0.0) += w;
        }
    }
    rows.into_iter()
        .map(|row| {
            let total: f64 = row.values().sum();
            row.into_iter().map(|(t, w)| (t, w / total)).collect()
        })
        .collect()
}

pub fn personalized_pagerank(
    graph: &FusedGraph,
    seeds: &BTreeMap<NodeId, f64>,
    config: &PprConfig,
) -> Result<PprResult, GraphError> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(GraphError::EmptySeeds);
    }
    let n = graph.node_count();
    let mut s = vec![0.0; n];
    let mut sum = 0.0;
    for (id, &mass) in seeds {
        let i = graph
            .index_of(id)
            .ok_or_else(|| GraphError::UnknownSeedNode(id.clone()))?;
        if !(mass >= 0.0 && mass.is_finite()) {
            return Err(GraphError::BadSeedMass { sum: mass });
        }
        s[i] += mass;
        sum += mass;
    }
    if (sum - 1.0).abs() > SEED_SUM_TOLERANCE {
        return Err(GraphError::BadSeedMass { sum });
    }

    let d = config.damping;
    let rows = transitions(graph, config.edge_direction);
    let dangling: Vec<usize> = (0..n).filter(|&i| rows[i].is_empty()).collect();

    let mut p = s.clone();
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        iterations += 1;
        let dangling_mass: f64 = dangling.iter().map(|&i| p[i]).sum();
        for i in 0..n {
            next[i] = (1.0 - d) * s[i] + d * dangling_mass * s[i];
        }
        for (u, row) in rows.iter().enumerate() {
            let mass = d * p[u];
            if mass == 0.0 {
                continue;
            }
            for &(v, prob) in row {
                next[v] += mass * prob;
            }
        }
        residual = p.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut p, &mut next);
        if residual <= config.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!(
            iterations,
            residual, "personalized pagerank did not converge"
        );
    }
    Ok(PprResult {
        scores: p,
        iterations,
        residual,
        converged,
    })
}
