//! Retrieval-only latency measurement: filter + initial selection +
//! traversal, with query embeddings computed outside the clock and no LLM
//! involvement at all.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::EvalProblem;
use crate::embedding::UnitVector;
use crate::graph::ThoughtGraph;
use crate::retrieval::{assemble, RetrievalConfig, RetrievalError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub n: usize,
    pub mean_s: f64,
    pub p50_s: f64,
    pub p95_s: f64,
    pub min_s: f64,
    pub max_s: f64,
}

/// Wall-clock stats over `repetitions` passes of the query set. Queries
/// whose candidate filter comes back empty still count (the filter ran);
/// other retrieval errors propagate.
pub fn bench_retrieval(
    graph: &ThoughtGraph,
    queries: &[(EvalProblem, UnitVector)],
    cfg: &RetrievalConfig,
    repetitions: usize,
) -> Result<LatencyStats, RetrievalError> {
    cfg.validate()?;
    let mut samples_s = Vec::with_capacity(queries.len() * repetitions.max(1));
    for _ in 0..repetitions.max(1) {
        for (problem, query) in queries {
            let started = Instant::now();
            match assemble(graph, problem, query, cfg) {
                Ok(_) | Err(RetrievalError::NoTemplateFound { .. }) => {}
                Err(e) => return Err(e),
            }
            samples_s.push(started.elapsed().as_secs_f64());
        }
    }
    Ok(stats_from(samples_s))
}

fn stats_from(mut samples_s: Vec<f64>) -> LatencyStats {
    if samples_s.is_empty() {
        return LatencyStats {
            n: 0,
            mean_s: 0.0,
            p50_s: 0.0,
            p95_s: 0.0,
            min_s: 0.0,
            max_s: 0.0,
        };
    }
    samples_s.sort_by(|a, b| a.partial_cmp(b).expect("durations are finite"));
    let n = samples_s.len();
    let mean_s = samples_s.iter().sum::<f64>() / n as f64;
    // Nearest-rank percentiles.
    let rank = |q: f64| samples_s[((q * n as f64).ceil() as usize).clamp(1, n) - 1];
    LatencyStats {
        n,
        mean_s,
        p50_s: rank(0.50),
        p95_s: rank(0.95),
        min_s: samples_s[0],
        max_s: samples_s[n - 1],
    }
}
