//! Best-match similarity histogram: how close solution steps come to the
//! stored graph nodes, with no metadata filtering applied.

use serde::{Deserialize, Serialize};

use crate::corpus::sanitize_text;
use crate::embedding::{normalized_similarity, EmbeddingProvider};
use crate::graph::ThoughtGraph;

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityHistogram {
    /// Equal-width bin edges over [0, 1]; `counts[i]` covers
    /// `[edges[i], edges[i+1])`, with the last bin closed at 1.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Best-match normalized similarity per input step, in input order.
    pub per_step_best: Vec<f64>,
}

/// For each step text, the best normalized similarity against all graph
/// nodes, bucketed into `bins` equal-width bins over [0, 1].
pub fn similarity_histogram(
    steps: &[String],
    graph: &ThoughtGraph,
    provider: &dyn EmbeddingProvider,
    bins: usize,
) -> Result<SimilarityHistogram, EvalError> {
    let bins = bins.max(1);
    let sanitized: Vec<String> = steps.iter().map(|s| sanitize_text(s)).collect();
    let embeddings = provider.embed(&sanitized)?;

    let mut per_step_best = Vec::with_capacity(steps.len());
    for query in &embeddings {
        let mut best = 0.0f64;
        for node in graph.nodes() {
            let sim = normalized_similarity(query, &node.embedding)?;
            if sim > best {
                best = sim;
            }
        }
        per_step_best.push(best);
    }

    let mut counts = vec![0u64; bins];
    for &best in &per_step_best {
        let bin = ((best * bins as f64).floor() as usize).min(bins - 1);
        counts[bin] += 1;
    }
    let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    Ok(SimilarityHistogram {
        edges,
        counts,
        per_step_best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Template;
    use crate::embedding::SeededProvider;
    use crate::graph::build_graph;

    fn graph_and_provider() -> (ThoughtGraph, SeededProvider) {
        let provider = SeededProvider::new(77, 16);
        let corpus: Vec<Template> = (0..6)
            .map(|i| Template {
                template_id: format!("t{i}"),
                template_type: "x".to_string(),
                knowledge_tags: vec![],
                steps: (0..3).map(|j| format!("stored step {i}-{j}")).collect(),
            })
            .collect();
        (build_graph(&corpus, &provider, 0.6).unwrap(), provider)
    }

    #[test]
    fn identical_step_hits_the_top_bin_with_similarity_one() {
        let (graph, provider) = graph_and_provider();
        let steps = vec!["stored step 2-1".to_string()];
        let hist = similarity_histogram(&steps, &graph, &provider, 5).unwrap();
        assert!((hist.per_step_best[0] - 1.0).abs() <= 1e-9);
        assert_eq!(hist.counts[4], 1);
        assert_eq!(hist.counts.iter().sum::<u64>(), 1);
    }

    #[test]
    fn unrelated_steps_score_against_all_nodes_without_filtering() {
        let (graph, provider) = graph_and_provider();
        let steps = vec!["completely unrelated text".to_string()];
        let hist = similarity_histogram(&steps, &graph, &provider, 5).unwrap();
        // Random unit vectors at dim 16 land near 0.5 similarity, so the
        // best match is strictly positive even with zero tag overlap.
        assert!(hist.per_step_best[0] > 0.4);
        assert_eq!(hist.counts.iter().sum::<u64>(), 1);
    }

    #[test]
    fn near_duplicate_mass_concentrates_in_the_top_bins() {
        let (graph, provider) = graph_and_provider();
        // Half the steps are exact copies of stored nodes, half are noise.
        let mut steps: Vec<String> = (0..6).map(|i| format!("stored step {}-0", i % 6)).collect();
        steps.extend((0..6).map(|i| format!("noise {i}")));
        let hist = similarity_histogram(&steps, &graph, &provider, 5).unwrap();
        let top = hist.counts[4];
        assert!(
            top >= 6,
            "expected at least the 6 exact copies in the top bin, got {top}"
        );
        let lower: u64 = hist.counts[..3].iter().sum();
        assert!(lower <= 6, "noise steps should spread below: {:?}", hist.counts);
    }

    #[test]
    fn bin_edges_are_equal_width() {
        let (graph, provider) = graph_and_provider();
        let hist =
            similarity_histogram(&["a".to_string()], &graph, &provider, 4).unwrap();
        assert_eq!(hist.edges, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
