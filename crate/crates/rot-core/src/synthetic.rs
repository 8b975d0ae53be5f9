//! Seeded synthetic corpora and clustered embeddings for offline runs,
//! benchmarks, and scale tests.

use std::collections::HashMap;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::corpus::{EvalProblem, Template};
use crate::embedding::{EmbeddingError, PrecomputedProvider, UnitVector};

pub const TEMPLATE_TYPES: [&str; 6] = [
    "algebraic",
    "geometric",
    "combinatorial",
    "number_theory",
    "probability",
    "analytic",
];

pub const TAG_POOL: [&str; 8] = [
    "algebra",
    "geometry",
    "counting",
    "number theory",
    "probability",
    "calculus",
    "inequalities",
    "logarithms",
];

#[derive(Debug, Clone)]
pub struct SyntheticCorpusSpec {
    pub n_templates: usize,
    pub steps_min: usize,
    pub steps_max: usize,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        SyntheticCorpusSpec {
            n_templates: 100,
            steps_min: 4,
            steps_max: 6,
            seed: 0,
        }
    }
}

fn next_range(rng: &mut ChaCha20Rng, lo: usize, hi: usize) -> usize {
    if hi <= lo {
        return lo;
    }
    lo + (rng.next_u64() as usize) % (hi - lo + 1)
}

/// Deterministic template corpus: ids, types, tags, and step texts all
/// derive from the seed.
pub fn synthetic_corpus(spec: &SyntheticCorpusSpec) -> Vec<Template> {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    (0..spec.n_templates)
        .map(|i| {
            let ty = TEMPLATE_TYPES[(rng.next_u64() as usize) % TEMPLATE_TYPES.len()];
            let n_tags = next_range(&mut rng, 1, 3);
            let mut tags: Vec<String> = (0..n_tags)
                .map(|_| TAG_POOL[(rng.next_u64() as usize) % TAG_POOL.len()].to_string())
                .collect();
            tags.sort();
            tags.dedup();
            let n_steps = next_range(&mut rng, spec.steps_min, spec.steps_max);
            let steps = (0..n_steps)
                .map(|j| format!("template {i} step {j}: transform the {ty} expression ({:08x})", rng.next_u64() as u32))
                .collect();
            Template {
                template_id: format!("syn-{i:05}"),
                template_type: ty.to_string(),
                knowledge_tags: tags,
                steps,
            }
        })
        .collect()
}

/// Deterministic problems over the same type and tag vocabulary.
pub fn synthetic_problems(n: usize, seed: u64) -> Vec<EvalProblem> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    (0..n)
        .map(|i| {
            let ty = TEMPLATE_TYPES[(rng.next_u64() as usize) % TEMPLATE_TYPES.len()];
            let tag = TAG_POOL[(rng.next_u64() as usize) % TAG_POOL.len()].to_string();
            EvalProblem {
                problem_id: format!("synp-{i:04}"),
                statement: format!(
                    "problem {i}: evaluate the {ty} quantity ({:08x})",
                    rng.next_u64() as u32
                ),
                gold_answer: format!("{}", rng.next_u64() % 1000),
                template_type: ty.to_string(),
                knowledge_tags: vec![tag],
            }
        })
        .collect()
}

/// Cluster geometry for planted embeddings. Texts from one cluster sit at
/// `normalize(centroid + noise * gaussian)`, so within-cluster similarity
/// concentrates around `1 / (1 + noise²·dim)` on the cosine scale while
/// cross-cluster pairs stay near zero.
#[derive(Debug, Clone)]
pub struct ClusterSpec {
    pub n_clusters: usize,
    pub dim: usize,
    /// Per-coordinate noise for corpus steps.
    pub node_noise: f64,
    /// Per-coordinate noise for problem statements.
    pub query_noise: f64,
    pub seed: u64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        ClusterSpec {
            n_clusters: 24,
            dim: 64,
            node_noise: 0.05,
            query_noise: 0.08,
            seed: 0,
        }
    }
}

fn gaussian(rng: &mut ChaCha20Rng) -> f64 {
    // Box-Muller over two uniform draws; kept local so the stream is stable
    // across dependency versions.
    loop {
        let u1 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let u2 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

fn random_unit(rng: &mut ChaCha20Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / norm).collect()
}

/// Planted-cluster embeddings for a corpus and a problem set. Each template
/// is assigned a cluster; every step of the template (and each problem's
/// statement) embeds near that cluster's centroid. Returns a read-only
/// provider covering exactly those texts.
pub fn clustered_provider(
    corpus: &[Template],
    problems: &[EvalProblem],
    spec: &ClusterSpec,
) -> Result<PrecomputedProvider, EmbeddingError> {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed ^ 0xc1u64.rotate_left(17));
    let centroids: Vec<Vec<f64>> = (0..spec.n_clusters.max(1))
        .map(|_| random_unit(&mut rng, spec.dim))
        .collect();

    let mut map: HashMap<String, UnitVector> = HashMap::new();
    let displaced = |centroid: &[f64], noise: f64, rng: &mut ChaCha20Rng, idx: usize| {
        let values: Vec<f32> = centroid
            .iter()
            .map(|&c| (c + noise * gaussian(rng)) as f32)
            .collect();
        UnitVector::new(values, idx)
    };

    for (i, template) in corpus.iter().enumerate() {
        let centroid = &centroids[(rng.next_u64() as usize) % centroids.len()];
        for step in &template.steps {
            let v = displaced(centroid, spec.node_noise, &mut rng, i)?;
            map.insert(crate::corpus::sanitize_text(step), v);
        }
    }
    for (i, problem) in problems.iter().enumerate() {
        let centroid = &centroids[(rng.next_u64() as usize) % centroids.len()];
        let v = displaced(centroid, spec.query_noise, &mut rng, i)?;
        map.insert(crate::corpus::sanitize_text(&problem.statement), v);
    }
    PrecomputedProvider::from_map(
        format!("clustered-{}-d{}", spec.seed, spec.dim),
        spec.dim,
        map,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{normalized_similarity, EmbeddingProvider};

    #[test]
    fn corpus_generation_is_deterministic_and_in_range() {
        let spec = SyntheticCorpusSpec {
            n_templates: 50,
            steps_min: 4,
            steps_max: 6,
            seed: 9,
        };
        let a = synthetic_corpus(&spec);
        let b = synthetic_corpus(&spec);
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        assert!(a.iter().all(|t| (4..=6).contains(&t.steps.len())));
    }

    /// A corpus at reference scale: 3.34k templates of ~5 steps comes out
    /// to roughly 16.7k total steps.
    #[test]
    fn reference_scale_corpus_has_the_expected_step_count() {
        let spec = SyntheticCorpusSpec {
            n_templates: 3340,
            steps_min: 4,
            steps_max: 6,
            seed: 1,
        };
        let corpus = synthetic_corpus(&spec);
        assert_eq!(corpus.len(), 3340);
        let total_steps: usize = corpus.iter().map(|t| t.steps.len()).sum();
        assert!(
            (15_500..=18_000).contains(&total_steps),
            "total steps {total_steps} outside the ~16.7k band"
        );
    }

    #[test]
    fn clustered_embeddings_separate_within_from_cross_cluster() {
        let corpus = synthetic_corpus(&SyntheticCorpusSpec {
            n_templates: 12,
            steps_min: 3,
            steps_max: 3,
            seed: 4,
        });
        let spec = ClusterSpec {
            n_clusters: 3,
            dim: 32,
            node_noise: 0.02,
            query_noise: 0.05,
            seed: 4,
        };
        let provider = clustered_provider(&corpus, &[], &spec).unwrap();
        // Steps of one template share a cluster: very high similarity.
        let t0 = &corpus[0];
        let vs = provider
            .embed(&[t0.steps[0].clone(), t0.steps[1].clone()])
            .unwrap();
        let within = normalized_similarity(&vs[0], &vs[1]).unwrap();
        assert!(within > 0.9, "within-cluster similarity {within}");
    }
}
