//! Unit-norm step embeddings, the normalized similarity measure used across
//! the engine, and the write-once embedding cache.

mod cache;
mod providers;

pub use cache::EmbeddingCache;
pub use providers::{
    seeded_vector, CachedProvider, HttpEmbeddingProvider, PrecomputedProvider, SeededProvider,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("zero vector for input {index}: cannot normalize")]
    ZeroVector { index: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("provider {provider_id:?} has no embedding for text {text_excerpt:?} (input {index})")]
    MissingText {
        provider_id: String,
        index: usize,
        text_excerpt: String,
    },
    #[error("embedding transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("embedding endpoint returned HTTP {status}: {body_excerpt}")]
    Http { status: u16, body_excerpt: String },
    #[error("embedding protocol error: {0}")]
    Protocol(String),
    #[error("cache file {path}: {message}")]
    CacheFile { path: String, message: String },
    #[error("cache provider mismatch: cache is for {cache_provider:?}, provider is {provider_id:?}")]
    ProviderMismatch {
        cache_provider: String,
        provider_id: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// An L2-normalized embedding. Construction always renormalizes, so stored
/// vectors satisfy `|‖v‖₂ − 1| ≤ 1e-6`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector {
    values: Vec<f32>,
}

impl UnitVector {
    /// Normalize `values` to unit L2 norm. A (near-)zero vector is rejected
    /// rather than divided by zero; `index` identifies the offending input
    /// in batch contexts.
    pub fn new(values: Vec<f32>, index: usize) -> Result<Self, EmbeddingError> {
        let norm = l2_norm(&values);
        if norm < 1e-12 {
            return Err(EmbeddingError::ZeroVector { index });
        }
        let values = values.iter().map(|&v| (v as f64 / norm) as f32).collect();
        Ok(UnitVector { values })
    }

    /// Reconstruct an already-normalized vector from storage without
    /// renormalizing, so persisted bytes survive round trips exactly.
    /// Rejects vectors whose norm has drifted outside the 1e-6 tolerance.
    pub(crate) fn from_stored(values: Vec<f32>) -> Result<Self, EmbeddingError> {
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() > 1e-6 {
            return Err(EmbeddingError::Protocol(format!(
                "stored vector has norm {norm}, expected 1 ± 1e-6"
            )));
        }
        Ok(UnitVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

fn l2_norm(values: &[f32]) -> f64 {
    values
        .iter()
        .map(|&v| v as f64 * v as f64)
        .sum::<f64>()
        .sqrt()
}

/// Dot product of two unit vectors, which equals their cosine similarity.
pub fn cosine(a: &UnitVector, b: &UnitVector) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(dot_f64(a.values(), b.values()))
}

/// Cosine similarity rescaled into `[0, 1]` via `(cos + 1) / 2`.
pub fn normalized_similarity(a: &UnitVector, b: &UnitVector) -> Result<f64, EmbeddingError> {
    Ok(scale_cosine(cosine(a, b)?))
}

/// Map a cosine value in `[-1, 1]` to the `[0, 1]` similarity scale.
pub fn scale_cosine(cos: f64) -> f64 {
    ((cos + 1.0) / 2.0).clamp(0.0, 1.0)
}

/// f64 dot product of f32 slices with a fixed accumulation order, so results
/// are bit-identical regardless of call site or thread count. Each f32×f32
/// product is exact in f64; eight accumulators break the dependency chain.
pub(crate) fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let lanes = a.len() / 8 * 8;
    let (ah, at) = a.split_at(lanes);
    let (bh, bt) = b.split_at(lanes);
    for (ca, cb) in ah.chunks_exact(8).zip(bh.chunks_exact(8)) {
        for k in 0..8 {
            acc[k] += ca[k] as f64 * cb[k] as f64;
        }
    }
    let mut sum = 0.0f64;
    for v in acc {
        sum += v;
    }
    for (x, y) in at.iter().zip(bt.iter()) {
        sum += *x as f64 * *y as f64;
    }
    sum
}

/// Produces embeddings for a batch of already-sanitized texts.
///
/// `embed` is the raw single-call path; batching, caching, and bounded
/// fan-out live in [`CachedProvider`].
pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier; part of every cache key so vectors from different
    /// providers can never mix in one graph.
    fn provider_id(&self) -> &str;

    fn dim(&self) -> usize;

    /// One vector per input text, in input order, each L2-normalized.
    fn embed(&self, texts: &[String]) -> Result<Vec<UnitVector>, EmbeddingError>;
}
