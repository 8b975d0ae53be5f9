//! Entry-node selection and reward-guided traversal: metadata filtering,
//! the blended first-step reward, and the greedy expansion loop that
//! assembles a problem-specific template.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EvalProblem;
use crate::embedding::{normalized_similarity, EmbeddingError, UnitVector};
use crate::graph::{NodeId, ThoughtGraph};

/// Two candidate scores within this distance are considered tied and broken
/// lexicographically by (template_id, step_index).
pub const SCORE_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("no template found: the filtered candidate set for template_type {template_type:?} is empty")]
    NoTemplateFound { template_type: String },
    #[error("start node {0} is not in the graph")]
    UnknownStart(NodeId),
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// All retrieval tunables. Defaults are the reference operating point:
/// alpha 0.8, edge and termination thresholds 0.85, maximum template
/// length 8, equal semantic and flow weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    /// Blend between query similarity and the step-0 structural prior in
    /// first-step scoring.
    pub alpha: f64,
    /// Semantic edge threshold used at graph build time.
    pub tau_edge: f64,
    /// Traversal termination threshold on the best candidate reward.
    pub tau_term: f64,
    /// Maximum assembled template length.
    pub l_max: usize,
    /// Weight on query similarity in the traversal reward.
    pub semantic_weight: f64,
    /// Weight on the sequential-flow indicator in the traversal reward.
    pub flow_weight: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            alpha: 0.8,
            tau_edge: 0.85,
            tau_term: 0.85,
            l_max: 8,
            semantic_weight: 1.0,
            flow_weight: 1.0,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(RetrievalError::InvalidConfig(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        if !(0.0 < self.tau_edge && self.tau_edge < 1.0) {
            return Err(RetrievalError::InvalidConfig(format!(
                "tau_edge {} outside (0, 1)",
                self.tau_edge
            )));
        }
        if self.l_max == 0 {
            return Err(RetrievalError::InvalidConfig("l_max must be positive".into()));
        }
        Ok(())
    }
}

/// A scored node. `total` comes from the first-step reward
/// `alpha * r_q + (1 - alpha) * r_s` when the node was picked as an entry
/// point, and from the traversal reward
/// `semantic_weight * r_q + flow_weight * r_f` when it was appended during
/// expansion. `r_s` and `r_f` are 0/1 indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub node: NodeId,
    pub r_q: f64,
    pub r_s: f64,
    pub r_f: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationReason {
    /// The best candidate reward fell below the termination threshold.
    BelowThreshold,
    /// The template reached its maximum length.
    MaxLength,
    /// The current node had no unvisited neighbors.
    NoCandidates,
}

/// The output of retrieval: an ordered node path with rendered step texts,
/// per-step scores, and the reason expansion stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembledTemplate {
    pub path: Vec<NodeId>,
    pub step_texts: Vec<String>,
    pub per_step: Vec<ScoredCandidate>,
    pub termination_reason: TerminationReason,
}

impl AssembledTemplate {
    pub fn len(&self) -> usize {
        self.path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.path.is_empty()
    }
}

fn fold(s: &str) -> String {
    s.trim().to_lowercase()
}

pub(crate) fn filter_candidate_indices(graph: &ThoughtGraph, problem: &EvalProblem) -> Vec<u32> {
    let wanted_type = fold(&problem.template_type);
    let type_matched: Vec<u32> = (0..graph.node_count() as u32)
        .filter(|&i| fold(&graph.node(i).template_type) == wanted_type)
        .collect();
    if problem.knowledge_tags.is_empty() {
        return type_matched;
    }
    let wanted_tags: Vec<String> = problem.knowledge_tags.iter().map(|t| fold(t)).collect();
    let tag_matched: Vec<u32> = type_matched
        .iter()
        .copied()
        .filter(|&i| {
            graph
                .node(i)
                .knowledge_tags
                .iter()
                .any(|t| wanted_tags.contains(&fold(t)))
        })
        .collect();
    if tag_matched.is_empty() && !type_matched.is_empty() {
        log::warn!(
            "problem {}: tag filter {:?} emptied the candidate set; falling back to the {} type-matched node(s)",
            problem.problem_id,
            problem.knowledge_tags,
            type_matched.len()
        );
        return type_matched;
    }
    tag_matched
}

/// Candidate entry nodes: template type must match the problem's
/// (case-folded); when the problem carries tags, node tags must intersect
/// them, except that an emptied tag filter falls back to the type-matched
/// set with a warning. An empty result is a legal value.
pub fn filter_candidates(graph: &ThoughtGraph, problem: &EvalProblem) -> Vec<NodeId> {
    filter_candidate_indices(graph, problem)
        .into_iter()
        .map(|i| graph.node(i).id.clone())
        .collect()
}

/// Pick from `candidates` the entry with one of the highest rewards; ties
/// within [`SCORE_EPS`] go to the lexicographically smallest node id.
fn argmax(graph: &ThoughtGraph, candidates: &[(u32, ScoredCandidate)]) -> Option<usize> {
    let max_total = candidates
        .iter()
        .map(|(_, c)| c.total)
        .fold(f64::NEG_INFINITY, f64::max);
    candidates
        .iter()
        .enumerate()
        .filter(|(_, (_, c))| c.total >= max_total - SCORE_EPS)
        .min_by(|(_, (i, _)), (_, (j, _))| graph.node(*i).id.cmp(&graph.node(*j).id))
        .map(|(pos, _)| pos)
}

/// Select the entry node by maximizing
/// `alpha * r_q + (1 - alpha) * r_s` over the filtered candidates, where
/// `r_q` is the normalized query similarity and `r_s` indicates a step-0
/// node.
pub fn select_initial_node(
    graph: &ThoughtGraph,
    problem: &EvalProblem,
    query_embedding: &UnitVector,
    cfg: &RetrievalConfig,
) -> Result<ScoredCandidate, RetrievalError> {
    let indices = filter_candidate_indices(graph, problem);
    select_initial_from(graph, &indices, query_embedding, cfg).ok_or_else(|| {
        RetrievalError::NoTemplateFound {
            template_type: problem.template_type.clone(),
        }
    })
}

fn select_initial_from(
    graph: &ThoughtGraph,
    indices: &[u32],
    query_embedding: &UnitVector,
    cfg: &RetrievalConfig,
) -> Option<ScoredCandidate> {
    let scored: Vec<(u32, ScoredCandidate)> = indices
        .iter()
        .map(|&i| {
            let node = graph.node(i);
            let r_q = normalized_similarity(query_embedding, &node.embedding)
                .expect("graph and query dims match");
            let r_s = if node.id.step_index == 0 { 1.0 } else { 0.0 };
            let total = cfg.alpha * r_q + (1.0 - cfg.alpha) * r_s;
            (
                i,
                ScoredCandidate {
                    node: node.id.clone(),
                    r_q,
                    r_s,
                    r_f: 0.0,
                    total,
                },
            )
        })
        .collect();
    argmax(graph, &scored).map(|pos| scored[pos].1.clone())
}

/// Expand `start` greedily. At each step the candidates are the sequential
/// and semantic out-neighbors of the current node, minus nodes already in
/// the path; each is scored `semantic_weight * r_q + flow_weight * r_f`
/// with `r_f = 1` iff a sequential edge connects the pair. The loop halts
/// when the path reaches `l_max`, the candidate set is empty, or the best
/// reward falls below `tau_term` — checked in that order.
pub fn traverse(
    graph: &ThoughtGraph,
    start: &NodeId,
    query_embedding: &UnitVector,
    cfg: &RetrievalConfig,
) -> Result<AssembledTemplate, RetrievalError> {
    let start_idx = graph
        .node_idx(start)
        .ok_or_else(|| RetrievalError::UnknownStart(start.clone()))?;

    // The start entry is scored with the first-step reward so per_step[0]
    // reports the phase that chose it.
    let start_node = graph.node(start_idx);
    let start_r_q = normalized_similarity(query_embedding, &start_node.embedding)?;
    let start_r_s = if start_node.id.step_index == 0 { 1.0 } else { 0.0 };
    let mut per_step = vec![ScoredCandidate {
        node: start_node.id.clone(),
        r_q: start_r_q,
        r_s: start_r_s,
        r_f: 0.0,
        total: cfg.alpha * start_r_q + (1.0 - cfg.alpha) * start_r_s,
    }];

    let mut visited = vec![false; graph.node_count()];
    visited[start_idx as usize] = true;
    let mut path_idx = vec![start_idx];

    let termination_reason = loop {
        if path_idx.len() >= cfg.l_max {
            break TerminationReason::MaxLength;
        }
        let current = *path_idx.last().expect("path is non-empty");
        let candidates: Vec<(u32, ScoredCandidate)> = graph
            .neighbors(current)
            .into_iter()
            .filter(|n| !visited[n.target as usize])
            .map(|n| {
                let node = graph.node(n.target);
                let r_q = normalized_similarity(query_embedding, &node.embedding)
                    .expect("graph and query dims match");
                let r_f = if n.via_sequential { 1.0 } else { 0.0 };
                let total = cfg.semantic_weight * r_q + cfg.flow_weight * r_f;
                (
                    n.target,
                    ScoredCandidate {
                        node: node.id.clone(),
                        r_q,
                        r_s: 0.0,
                        r_f,
                        total,
                    },
                )
            })
            .collect();
        if candidates.is_empty() {
            break TerminationReason::NoCandidates;
        }
        let best_total = candidates
            .iter()
            .map(|(_, c)| c.total)
            .fold(f64::NEG_INFINITY, f64::max);
        if best_total < cfg.tau_term {
            break TerminationReason::BelowThreshold;
        }
        let pos = argmax(graph, &candidates).expect("candidates are non-empty");
        let (idx, scored) = candidates[pos].clone();
        visited[idx as usize] = true;
        path_idx.push(idx);
        per_step.push(scored);
    };

    let path: Vec<NodeId> = path_idx.iter().map(|&i| graph.node(i).id.clone()).collect();
    let step_texts: Vec<String> = path_idx
        .iter()
        .map(|&i| graph.node(i).step_text.clone())
        .collect();
    Ok(AssembledTemplate {
        path,
        step_texts,
        per_step,
        termination_reason,
    })
}

/// Full retrieval pipeline: filter, select the entry node, then traverse.
pub fn assemble(
    graph: &ThoughtGraph,
    problem: &EvalProblem,
    query_embedding: &UnitVector,
    cfg: &RetrievalConfig,
) -> Result<AssembledTemplate, RetrievalError> {
    let initial = select_initial_node(graph, problem, query_embedding, cfg)?;
    traverse(graph, &initial.node, query_embedding, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweepPoint {
    pub alpha: f64,
    /// Fraction of selections that landed on a step-0 node.
    pub p_step0: f64,
    /// Mean query similarity of the selected entries.
    pub mean_similarity: f64,
    /// Problems with a non-empty candidate set at this alpha.
    pub n_selected: usize,
}

/// For each alpha, the fraction of problems whose selected entry is a
/// step-0 node and the mean query similarity of the selected entries.
/// Problems whose filter comes back empty are skipped.
pub fn alpha_sweep(
    graph: &ThoughtGraph,
    problems: &[(EvalProblem, UnitVector)],
    alphas: &[f64],
    base_cfg: &RetrievalConfig,
) -> Result<Vec<AlphaSweepPoint>, RetrievalError> {
    let filtered: Vec<Vec<u32>> = problems
        .iter()
        .map(|(p, _)| filter_candidate_indices(graph, p))
        .collect();
    let mut points = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let cfg = RetrievalConfig {
            alpha,
            ..base_cfg.clone()
        };
        cfg.validate()?;
        let mut step0 = 0usize;
        let mut sim_sum = 0.0f64;
        let mut n = 0usize;
        for ((_, query), indices) in problems.iter().zip(&filtered) {
            let Some(selected) = select_initial_from(graph, indices, query, &cfg) else {
                continue;
            };
            n += 1;
            if selected.node.step_index == 0 {
                step0 += 1;
            }
            sim_sum += selected.r_q;
        }
        points.push(AlphaSweepPoint {
            alpha,
            p_step0: if n == 0 { 0.0 } else { step0 as f64 / n as f64 },
            mean_similarity: if n == 0 { 0.0 } else { sim_sum / n as f64 },
            n_selected: n,
        });
    }
    Ok(points)
}
