//! The thought graph: an immutable directed weighted multi-graph over
//! (template, step-index) nodes with sequential and semantic edge sets.

mod binary;
mod xml;

pub use binary::{load_graph_binary, save_graph_binary};
pub use xml::{load_graph_xml, save_graph_xml};

use std::collections::HashMap;
use std::fmt;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{sanitize_text, Template};
use crate::embedding::{
    dot_f64, scale_cosine, EmbeddingError, EmbeddingProvider, UnitVector,
};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("semantic edge threshold {0} must lie in (0, 1)")]
    InvalidThreshold(f64),
    #[error("cannot build a graph from an empty corpus")]
    EmptyCorpus,
    #[error("corpus contains duplicate template_id {0:?}")]
    DuplicateTemplate(String),
    #[error("embedding failed for node {node}: {source}")]
    Embedding {
        node: NodeId,
        #[source]
        source: EmbeddingError,
    },
    #[error("embedding failed: {0}")]
    EmbeddingBatch(#[from] EmbeddingError),
    #[error("profile threshold {threshold} is below the graph's build threshold {tau_edge}; edges under the build threshold were never retained")]
    ProfileBelowBuildThreshold { threshold: f64, tau_edge: f64 },
    #[error("subsample size {requested} out of range 1..={available}")]
    SubsampleOutOfRange { requested: usize, available: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("graph file {path} has unsupported version {found} (expected {expected})")]
    VersionMismatch {
        path: String,
        found: u32,
        expected: u32,
    },
    #[error("graph file {path} is corrupt: {message}")]
    Corrupt { path: String, message: String },
    #[error("graph invariant violated: {0}")]
    Invariant(String),
}

/// A node is one reasoning step: the pair (template, step index).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub template_id: String,
    pub step_index: u32,
}

impl NodeId {
    pub fn new(template_id: impl Into<String>, step_index: u32) -> Self {
        NodeId {
            template_id: template_id.into(),
            step_index,
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.template_id, self.step_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Sequential,
    Semantic,
}

/// A directed edge as exposed to callers and serializers.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EdgeKind,
    pub weight: f64,
}

/// Per-node payload: the step text, routing metadata, and the cached
/// unit embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeData {
    pub id: NodeId,
    pub step_text: String,
    pub template_type: String,
    pub knowledge_tags: Vec<String>,
    pub embedding: UnitVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildParams {
    pub tau_edge: f64,
    pub provider_id: String,
    pub dim: usize,
}

/// Immutable thought graph. Nodes are stored in corpus order; adjacency is
/// kept by dense index for traversal speed, with `NodeId` lookups on the
/// side. Never mutated after construction, so it is safe to share across
/// any number of concurrent retrievals.
pub struct ThoughtGraph {
    nodes: Vec<NodeData>,
    node_index: HashMap<NodeId, u32>,
    seq_next: Vec<Option<u32>>,
    semantic_adj: Vec<Vec<(u32, f64)>>,
    params: BuildParams,
    corpus_fingerprint: String,
    template_order: Vec<String>,
}

impl fmt::Debug for ThoughtGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ThoughtGraph")
            .field("nodes", &self.nodes.len())
            .field("templates", &self.template_order.len())
            .field("sequential_edges", &self.sequential_edge_count())
            .field("semantic_edges", &self.semantic_edge_count())
            .field("params", &self.params)
            .field("corpus_fingerprint", &self.corpus_fingerprint)
            .finish()
    }
}

impl PartialEq for ThoughtGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.seq_next == other.seq_next
            && self.semantic_adj == other.semantic_adj
            && self.params == other.params
            && self.corpus_fingerprint == other.corpus_fingerprint
    }
}

/// A candidate move out of a node during traversal. `via_sequential` is true
/// when a sequential edge connects the pair, even if a semantic edge also
/// exists between the same nodes.
#[derive(Debug, Clone, Copy)]
pub struct Neighbor {
    pub target: u32,
    pub via_sequential: bool,
    pub semantic_weight: Option<f64>,
}

impl ThoughtGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn template_count(&self) -> usize {
        self.template_order.len()
    }

    pub fn template_order(&self) -> &[String] {
        &self.template_order
    }

    pub fn params(&self) -> &BuildParams {
        &self.params
    }

    pub fn corpus_fingerprint(&self) -> &str {
        &self.corpus_fingerprint
    }

    pub fn nodes(&self) -> &[NodeData] {
        &self.nodes
    }

    pub fn node(&self, idx: u32) -> &NodeData {
        &self.nodes[idx as usize]
    }

    pub fn node_idx(&self, id: &NodeId) -> Option<u32> {
        self.node_index.get(id).copied()
    }

    pub fn sequential_edge_count(&self) -> usize {
        self.seq_next.iter().filter(|n| n.is_some()).count()
    }

    /// Number of directed semantic edges (mirrored pairs count twice).
    pub fn semantic_edge_count(&self) -> usize {
        self.semantic_adj.iter().map(|a| a.len()).sum()
    }

    pub fn sequential_next(&self, idx: u32) -> Option<u32> {
        self.seq_next[idx as usize]
    }

    pub fn semantic_neighbors(&self, idx: u32) -> &[(u32, f64)] {
        &self.semantic_adj[idx as usize]
    }

    /// Distinct out-neighbors of a node across both edge kinds, ordered by
    /// target index.
    pub fn neighbors(&self, idx: u32) -> Vec<Neighbor> {
        let seq = self.seq_next[idx as usize];
        let mut out: Vec<Neighbor> = Vec::with_capacity(
            self.semantic_adj[idx as usize].len() + usize::from(seq.is_some()),
        );
        for &(target, weight) in &self.semantic_adj[idx as usize] {
            out.push(Neighbor {
                target,
                via_sequential: Some(target) == seq,
                semantic_weight: Some(weight),
            });
        }
        if let Some(target) = seq {
            if !out.iter().any(|n| n.target == target) {
                out.push(Neighbor {
                    target,
                    via_sequential: true,
                    semantic_weight: None,
                });
            }
        }
        out.sort_by_key(|n| n.target);
        out
    }

    /// All directed edges, sequential first, then semantic, in node order.
    pub fn edges(&self) -> Vec<Edge> {
        let mut edges = Vec::new();
        for (i, next) in self.seq_next.iter().enumerate() {
            if let Some(j) = next {
                edges.push(Edge {
                    from: self.nodes[i].id.clone(),
                    to: self.nodes[*j as usize].id.clone(),
                    kind: EdgeKind::Sequential,
                    weight: 1.0,
                });
            }
        }
        for (i, adj) in self.semantic_adj.iter().enumerate() {
            for &(j, w) in adj {
                edges.push(Edge {
                    from: self.nodes[i].id.clone(),
                    to: self.nodes[j as usize].id.clone(),
                    kind: EdgeKind::Semantic,
                    weight: w,
                });
            }
        }
        edges
    }

    /// Undirected semantic pairs (i < j) with weights, in index order.
    pub fn semantic_pairs(&self) -> Vec<(u32, u32, f64)> {
        let mut pairs = Vec::with_capacity(self.semantic_edge_count() / 2);
        for (i, adj) in self.semantic_adj.iter().enumerate() {
            for &(j, w) in adj {
                if (i as u32) < j {
                    pairs.push((i as u32, j, w));
                }
            }
        }
        pairs
    }

    /// Mean over nodes of the count of semantic neighbors at weight ≥ τ, for
    /// each requested threshold. Requires every threshold to be at or above
    /// the build threshold, below which edges were never retained.
    pub fn semantic_degree_profile(
        &self,
        thresholds: &[f64],
    ) -> Result<Vec<DegreeProfilePoint>, GraphError> {
        for &t in thresholds {
            if !(0.0 < t && t < 1.0) {
                return Err(GraphError::InvalidThreshold(t));
            }
            if t < self.params.tau_edge {
                return Err(GraphError::ProfileBelowBuildThreshold {
                    threshold: t,
                    tau_edge: self.params.tau_edge,
                });
            }
        }
        let n = self.node_count().max(1) as f64;
        Ok(thresholds
            .iter()
            .map(|&tau| {
                let degree_sum: usize = self
                    .semantic_adj
                    .iter()
                    .map(|adj| adj.iter().filter(|(_, w)| *w >= tau).count())
                    .sum();
                DegreeProfilePoint {
                    tau,
                    mean_semantic_degree: degree_sum as f64 / n,
                }
            })
            .collect())
    }

    /// Retain exactly `n_templates` whole templates chosen by seeded uniform
    /// sampling (original template order preserved); intra-sample edges are
    /// kept, everything else dropped. Deterministic for a given seed.
    pub fn subsample(&self, n_templates: usize, seed: u64) -> Result<ThoughtGraph, GraphError> {
        let available = self.template_count();
        if n_templates == 0 || n_templates > available {
            return Err(GraphError::SubsampleOutOfRange {
                requested: n_templates,
                available,
            });
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut indices: Vec<usize> = (0..available).collect();
        // Partial Fisher-Yates: the first n_templates slots are the sample.
        for i in 0..n_templates {
            let j = i + (rng.next_u64() as usize) % (available - i);
            indices.swap(i, j);
        }
        let mut chosen = indices[..n_templates].to_vec();
        chosen.sort_unstable();
        let keep: Vec<&str> = chosen
            .iter()
            .map(|&i| self.template_order[i].as_str())
            .collect();
        let keep_set: std::collections::HashSet<&str> = keep.iter().copied().collect();

        let mut keep_node = vec![false; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            keep_node[i] = keep_set.contains(node.id.template_id.as_str());
        }
        let mut remap = vec![u32::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if keep_node[i] {
                remap[i] = nodes.len() as u32;
                nodes.push(node.clone());
            }
        }

        let mut seq_next = vec![None; nodes.len()];
        let mut semantic_adj = vec![Vec::new(); nodes.len()];
        for (i, next) in self.seq_next.iter().enumerate() {
            if !keep_node[i] {
                continue;
            }
            if let Some(j) = next {
                if keep_node[*j as usize] {
                    seq_next[remap[i] as usize] = Some(remap[*j as usize]);
                }
            }
        }
        for (i, adj) in self.semantic_adj.iter().enumerate() {
            if !keep_node[i] {
                continue;
            }
            for &(j, w) in adj {
                if keep_node[j as usize] {
                    semantic_adj[remap[i] as usize].push((remap[j as usize], w));
                }
            }
        }
        for adj in &mut semantic_adj {
            adj.sort_by_key(|(j, _)| *j);
        }

        let template_order: Vec<String> = keep.iter().map(|s| s.to_string()).collect();
        let corpus_fingerprint = fingerprint_nodes(&nodes);
        let node_index = build_node_index(&nodes);
        Ok(ThoughtGraph {
            nodes,
            node_index,
            seq_next,
            semantic_adj,
            params: self.params.clone(),
            corpus_fingerprint,
            template_order,
        })
    }

    /// Check every structural invariant. Deserializers call this so a
    /// corrupted file can never yield a partially valid graph.
    pub fn validate(&self) -> Result<(), GraphError> {
        let fail = |msg: String| Err(GraphError::Invariant(msg));
        if self.nodes.is_empty() {
            return fail("graph has no nodes".into());
        }
        if self.nodes.len() != self.node_index.len() {
            return fail("duplicate node ids".into());
        }

        // Embeddings present with a consistent dimension.
        for node in &self.nodes {
            if node.embedding.dim() != self.params.dim {
                return fail(format!(
                    "node {} embedding dim {} != {}",
                    node.id,
                    node.embedding.dim(),
                    self.params.dim
                ));
            }
        }

        // Sequential edges form one simple path 0..l_t-1 per template.
        let mut steps_per_template: HashMap<&str, Vec<u32>> = HashMap::new();
        for node in &self.nodes {
            steps_per_template
                .entry(node.id.template_id.as_str())
                .or_default()
                .push(node.id.step_index);
        }
        for (tid, steps) in &steps_per_template {
            let mut sorted = steps.clone();
            sorted.sort_unstable();
            if sorted != (0..steps.len() as u32).collect::<Vec<_>>() {
                return fail(format!("template {tid:?} steps are not contiguous from 0"));
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let expected_next = self
                .node_index
                .get(&NodeId::new(
                    node.id.template_id.clone(),
                    node.id.step_index + 1,
                ))
                .copied();
            if self.seq_next[i] != expected_next {
                return fail(format!("node {} has a wrong sequential edge", node.id));
            }
        }

        // Semantic edges: no self loops, threshold soundness, mirror pairs.
        for (i, adj) in self.semantic_adj.iter().enumerate() {
            let mut prev: Option<u32> = None;
            for &(j, w) in adj {
                if j as usize == i {
                    return fail(format!("self semantic edge at {}", self.nodes[i].id));
                }
                if j as usize >= self.nodes.len() {
                    return fail("semantic edge target out of range".into());
                }
                if prev.is_some_and(|p| p >= j) {
                    return fail("semantic adjacency not strictly sorted".into());
                }
                prev = Some(j);
                if !(self.params.tau_edge..=1.0).contains(&w) {
                    return fail(format!(
                        "semantic weight {w} outside [tau_edge, 1] at {} -> {}",
                        self.nodes[i].id, self.nodes[j as usize].id
                    ));
                }
                let mirrored = self.semantic_adj[j as usize]
                    .binary_search_by_key(&(i as u32), |(t, _)| *t)
                    .ok()
                    .map(|pos| self.semantic_adj[j as usize][pos].1);
                if mirrored != Some(w) {
                    return fail(format!(
                        "semantic edge {} -> {} lacks an equal-weight mirror",
                        self.nodes[i].id, self.nodes[j as usize].id
                    ));
                }
            }
        }
        Ok(())
    }

    /// Assemble a graph from parts, re-deriving lookup structures and
    /// validating invariants. Used by the deserializers.
    pub(crate) fn from_parts(
        nodes: Vec<NodeData>,
        semantic_pairs: Vec<(u32, u32, f64)>,
        params: BuildParams,
        corpus_fingerprint: String,
    ) -> Result<ThoughtGraph, GraphError> {
        let node_index = build_node_index(&nodes);
        let mut seq_next = vec![None; nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            seq_next[i] = node_index
                .get(&NodeId::new(
                    node.id.template_id.clone(),
                    node.id.step_index + 1,
                ))
                .copied();
        }
        let mut semantic_adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); nodes.len()];
        for (i, j, w) in semantic_pairs {
            if i as usize >= nodes.len() || j as usize >= nodes.len() {
                return Err(GraphError::Invariant(
                    "semantic pair index out of range".into(),
                ));
            }
            semantic_adj[i as usize].push((j, w));
            semantic_adj[j as usize].push((i, w));
        }
        for adj in &mut semantic_adj {
            adj.sort_by_key(|(j, _)| *j);
        }
        let mut template_order = Vec::new();
        for node in &nodes {
            if template_order.last() != Some(&node.id.template_id) {
                template_order.push(node.id.template_id.clone());
            }
        }
        let graph = ThoughtGraph {
            nodes,
            node_index,
            seq_next,
            semantic_adj,
            params,
            corpus_fingerprint,
            template_order,
        };
        graph.validate()?;
        Ok(graph)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeProfilePoint {
    pub tau: f64,
    pub mean_semantic_degree: f64,
}

fn build_node_index(nodes: &[NodeData]) -> HashMap<NodeId, u32> {
    nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.clone(), i as u32))
        .collect()
}

/// Build the thought graph from a template corpus: one node per step,
/// sequential edges between consecutive steps, and a mirrored semantic edge
/// pair between every distinct node pair whose normalized similarity is at
/// or above `tau_edge` (inclusive).
pub fn build_graph(
    corpus: &[Template],
    provider: &dyn EmbeddingProvider,
    tau_edge: f64,
) -> Result<ThoughtGraph, GraphError> {
    if !(0.0 < tau_edge && tau_edge < 1.0) {
        return Err(GraphError::InvalidThreshold(tau_edge));
    }
    if corpus.is_empty() {
        return Err(GraphError::EmptyCorpus);
    }
    let mut template_order = Vec::with_capacity(corpus.len());
    {
        let mut seen = std::collections::HashSet::new();
        for t in corpus {
            if !seen.insert(t.template_id.as_str()) {
                return Err(GraphError::DuplicateTemplate(t.template_id.clone()));
            }
            template_order.push(t.template_id.clone());
        }
    }

    let mut ids = Vec::new();
    let mut texts = Vec::new();
    for t in corpus {
        for (i, step) in t.steps.iter().enumerate() {
            ids.push(NodeId::new(t.template_id.clone(), i as u32));
            texts.push(sanitize_text(step));
        }
    }
    let embeddings = provider.embed(&texts).map_err(|e| match &e {
        EmbeddingError::ZeroVector { index } | EmbeddingError::MissingText { index, .. } => {
            GraphError::Embedding {
                node: ids[*index].clone(),
                source: e,
            }
        }
        _ => GraphError::EmbeddingBatch(e),
    })?;

    let mut nodes = Vec::with_capacity(ids.len());
    let mut cursor = 0;
    for t in corpus {
        for _ in &t.steps {
            nodes.push(NodeData {
                id: ids[cursor].clone(),
                step_text: texts[cursor].clone(),
                template_type: t.template_type.clone(),
                knowledge_tags: t.knowledge_tags.clone(),
                embedding: embeddings[cursor].clone(),
            });
            cursor += 1;
        }
    }

    let semantic_pairs = semantic_pairs_exact(&nodes, provider.dim(), tau_edge);
    let params = BuildParams {
        tau_edge,
        provider_id: provider.provider_id().to_string(),
        dim: provider.dim(),
    };
    let corpus_fingerprint = fingerprint_nodes(&nodes);
    ThoughtGraph::from_parts(nodes, semantic_pairs, params, corpus_fingerprint)
}

/// Exact all-pairs similarity scan. Parallel over source nodes; per-pair
/// arithmetic is sequential and order-fixed, so the result is deterministic
/// for any thread count.
fn semantic_pairs_exact(nodes: &[NodeData], dim: usize, tau_edge: f64) -> Vec<(u32, u32, f64)> {
    let n = nodes.len();
    let mut matrix = vec![0.0f32; n * dim];
    for (i, node) in nodes.iter().enumerate() {
        matrix[i * dim..(i + 1) * dim].copy_from_slice(node.embedding.values());
    }
    let per_source: Vec<Vec<(u32, u32, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = &matrix[i * dim..(i + 1) * dim];
            let mut found = Vec::new();
            for j in (i + 1)..n {
                let b = &matrix[j * dim..(j + 1) * dim];
                let w = scale_cosine(dot_f64(a, b));
                if w >= tau_edge {
                    found.push((i as u32, j as u32, w));
                }
            }
            found
        })
        .collect();
    per_source.into_iter().flatten().collect()
}

/// Deterministic digest of the corpus content represented by a node list.
fn fingerprint_nodes(nodes: &[NodeData]) -> String {
    let mut hasher = Sha256::new();
    for node in nodes {
        hasher.update(node.id.template_id.as_bytes());
        hasher.update([0x1f]);
        hasher.update(node.id.step_index.to_le_bytes());
        hasher.update([0x1f]);
        hasher.update(node.template_type.as_bytes());
        hasher.update([0x1f]);
        for tag in &node.knowledge_tags {
            hasher.update(tag.as_bytes());
            hasher.update([0x1e]);
        }
        hasher.update([0x1f]);
        hasher.update(node.step_text.as_bytes());
        hasher.update([0x1d]);
    }
    hex::encode(hasher.finalize())
}
