//! Embedding provider implementations: a remote OpenAI-compatible HTTP
//! client, a read-only precomputed store, a deterministic seeded test
//! provider, and the caching wrapper that batches and fans out calls.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{EmbeddingCache, EmbeddingError, EmbeddingProvider, UnitVector};

/// Deterministic pseudo-embedder: hashes `(seed, text)` into a stream-cipher
/// key and draws `dim` values from it. Stable across processes and
/// platforms, which makes it suitable for oracle tests and offline runs.
pub struct SeededProvider {
    provider_id: String,
    seed: u64,
    dim: usize,
}

impl SeededProvider {
    pub fn new(seed: u64, dim: usize) -> Self {
        SeededProvider {
            provider_id: format!("seeded-{seed}-d{dim}"),
            seed,
            dim,
        }
    }
}

impl EmbeddingProvider for SeededProvider {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<UnitVector>, EmbeddingError> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| seeded_vector(self.seed, t, self.dim, i))
            .collect()
    }
}

/// The deterministic vector behind [`SeededProvider`]; also used by the mock
/// embedding endpoint so HTTP tests can predict outputs.
pub fn seeded_vector(
    seed: u64,
    text: &str,
    dim: usize,
    index: usize,
) -> Result<UnitVector, EmbeddingError> {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(text.as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha20Rng::from_seed(key);
    let values: Vec<f32> = (0..dim)
        .map(|_| ((rng.next_u32() >> 8) as f32 / (1u32 << 24) as f32) * 2.0 - 1.0)
        .collect();
    UnitVector::new(values, index)
}

enum PrecomputedStore {
    Map(HashMap<String, UnitVector>),
    Cache(EmbeddingCache),
}

/// Read-only store of precomputed embeddings, either an in-memory map or a
/// persisted cache file. Unknown texts are an error, never a fabrication.
pub struct PrecomputedProvider {
    provider_id: String,
    dim: usize,
    store: PrecomputedStore,
}

impl PrecomputedProvider {
    pub fn from_map(
        provider_id: impl Into<String>,
        dim: usize,
        map: HashMap<String, UnitVector>,
    ) -> Result<Self, EmbeddingError> {
        for v in map.values() {
            if v.dim() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: dim,
                    got: v.dim(),
                });
            }
        }
        Ok(PrecomputedProvider {
            provider_id: provider_id.into(),
            dim,
            store: PrecomputedStore::Map(map),
        })
    }

    /// Open a cache file written by [`EmbeddingCache::save`]. The provider id
    /// recorded in the file becomes this provider's id, so content keys and
    /// graph provenance stay consistent with the original producer.
    pub fn from_cache_file(path: &std::path::Path) -> Result<Self, EmbeddingError> {
        let cache = EmbeddingCache::load(path)?;
        Ok(PrecomputedProvider {
            provider_id: cache.provider_id().to_string(),
            dim: cache.dim(),
            store: PrecomputedStore::Cache(cache),
        })
    }
}

impl EmbeddingProvider for PrecomputedProvider {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<UnitVector>, EmbeddingError> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let found = match &self.store {
                    PrecomputedStore::Map(m) => m.get(t.as_str()).cloned(),
                    PrecomputedStore::Cache(c) => c.get(t),
                };
                found.ok_or_else(|| EmbeddingError::MissingText {
                    provider_id: self.provider_id.clone(),
                    index: i,
                    text_excerpt: excerpt(t),
                })
            })
            .collect()
    }
}

fn excerpt(text: &str) -> String {
    let mut s: String = text.chars().take(60).collect();
    if text.chars().count() > 60 {
        s.push('…');
    }
    s
}

/// OpenAI-compatible embedding API client:
/// `POST {url} {"model": ..., "input": [...]}`.
pub struct HttpEmbeddingProvider {
    provider_id: String,
    url: String,
    model: String,
    api_key: Option<String>,
    dim: usize,
    max_retries: u32,
    backoff_initial_ms: u64,
    client: reqwest::blocking::Client,
}

impl HttpEmbeddingProvider {
    pub fn new(
        url: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        dim: usize,
        timeout: Duration,
    ) -> Result<Self, EmbeddingError> {
        let model = model.into();
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbeddingError::Protocol(e.to_string()))?;
        Ok(HttpEmbeddingProvider {
            provider_id: format!("http:{model}#d{dim}"),
            url: url.into(),
            model,
            api_key,
            dim,
            max_retries: 2,
            backoff_initial_ms: 200,
            client,
        })
    }

    pub fn with_retries(mut self, max_retries: u32, backoff_initial_ms: u64) -> Self {
        self.max_retries = max_retries;
        self.backoff_initial_ms = backoff_initial_ms;
        self
    }
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingEntry>,
}

#[derive(Deserialize)]
struct EmbeddingEntry {
    embedding: Vec<f32>,
    #[serde(default)]
    index: Option<usize>,
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<UnitVector>, EmbeddingError> {
        let body = serde_json::json!({ "model": self.model, "input": texts });
        let mut attempt = 0u32;
        let response = loop {
            attempt += 1;
            let mut req = self.client.post(&self.url).json(&body);
            if let Some(key) = &self.api_key {
                req = req.header("authorization", format!("Bearer {key}"));
            }
            match req.send() {
                Ok(resp) => break resp,
                Err(e) if attempt <= self.max_retries => {
                    let wait = self.backoff_initial_ms << (attempt - 1);
                    log::warn!("embedding request failed ({e}); retrying in {wait} ms");
                    std::thread::sleep(Duration::from_millis(wait));
                }
                Err(e) => {
                    return Err(EmbeddingError::Transport {
                        attempts: attempt,
                        message: e.to_string(),
                    })
                }
            }
        };

        let status = response.status();
        let text = response
            .text()
            .map_err(|e| EmbeddingError::Transport {
                attempts: attempt,
                message: e.to_string(),
            })?;
        if !status.is_success() {
            return Err(EmbeddingError::Http {
                status: status.as_u16(),
                body_excerpt: excerpt(&text),
            });
        }
        let parsed: EmbeddingsResponse = serde_json::from_str(&text)
            .map_err(|e| EmbeddingError::Protocol(format!("bad embeddings response: {e}")))?;
        if parsed.data.len() != texts.len() {
            return Err(EmbeddingError::Protocol(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                parsed.data.len()
            )));
        }

        let mut slots: Vec<Option<UnitVector>> = vec![None; texts.len()];
        for (pos, entry) in parsed.data.into_iter().enumerate() {
            let index = entry.index.unwrap_or(pos);
            if index >= texts.len() {
                return Err(EmbeddingError::Protocol(format!(
                    "embedding index {index} out of range"
                )));
            }
            if entry.embedding.len() != self.dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: self.dim,
                    got: entry.embedding.len(),
                });
            }
            slots[index] = Some(UnitVector::new(entry.embedding, index)?);
        }
        slots
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                s.ok_or_else(|| EmbeddingError::Protocol(format!("missing embedding {i}")))
            })
            .collect()
    }
}

/// Caching wrapper around any provider. Cache hits never re-call the inner
/// provider; misses are embedded in chunks with bounded concurrent fan-out,
/// and output order is the input order regardless of completion order.
pub struct CachedProvider<'p> {
    inner: Box<dyn EmbeddingProvider + 'p>,
    cache: EmbeddingCache,
    chunk_size: usize,
    fan_out: usize,
}

impl<'p> CachedProvider<'p> {
    pub fn new(inner: Box<dyn EmbeddingProvider + 'p>) -> Self {
        let cache = EmbeddingCache::new(inner.provider_id(), inner.dim());
        CachedProvider {
            inner,
            cache,
            chunk_size: 64,
            fan_out: 8,
        }
    }

    pub fn with_chunk_size(mut self, chunk_size: usize) -> Self {
        self.chunk_size = chunk_size.max(1);
        self
    }

    pub fn with_fan_out(mut self, fan_out: usize) -> Self {
        self.fan_out = fan_out.max(1);
        self
    }

    /// Seed the wrapper with a previously saved cache. The cache must have
    /// been produced by the same provider.
    pub fn with_warm_cache(mut self, cache: EmbeddingCache) -> Result<Self, EmbeddingError> {
        if cache.provider_id() != self.inner.provider_id() {
            return Err(EmbeddingError::ProviderMismatch {
                cache_provider: cache.provider_id().to_string(),
                provider_id: self.inner.provider_id().to_string(),
            });
        }
        if cache.dim() != self.inner.dim() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.inner.dim(),
                got: cache.dim(),
            });
        }
        self.cache = cache;
        Ok(self)
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }
}

impl EmbeddingProvider for CachedProvider<'_> {
    fn provider_id(&self) -> &str {
        self.inner.provider_id()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<UnitVector>, EmbeddingError> {
        let mut out: Vec<Option<UnitVector>> = Vec::with_capacity(texts.len());
        let mut miss_positions = Vec::new();
        for text in texts {
            match self.cache.get(text) {
                Some(v) => out.push(Some(v)),
                None => {
                    miss_positions.push(out.len());
                    out.push(None);
                }
            }
        }

        if !miss_positions.is_empty() {
            let miss_texts: Vec<String> = miss_positions
                .iter()
                .map(|&i| texts[i].clone())
                .collect();
            let chunks: Vec<&[String]> = miss_texts.chunks(self.chunk_size).collect();
            let results: Vec<Result<Vec<UnitVector>, EmbeddingError>> =
                if chunks.len() <= 1 || self.fan_out <= 1 {
                    chunks.iter().map(|c| self.inner.embed(c)).collect()
                } else {
                    embed_chunks_bounded(self.inner.as_ref(), &chunks, self.fan_out)
                };

            let mut miss_iter = miss_positions.iter();
            for (chunk_idx, result) in results.into_iter().enumerate() {
                let chunk_start = chunk_idx * self.chunk_size;
                let vectors =
                    result.map_err(|e| remap_error(e, &miss_positions, chunk_start))?;
                for vector in vectors {
                    let pos = *miss_iter.next().expect("one vector per miss");
                    let stored = self.cache.insert_if_absent(&texts[pos], vector)?;
                    out[pos] = Some(stored);
                }
            }
        }

        Ok(out.into_iter().map(|v| v.expect("all slots filled")).collect())
    }
}

/// Run chunk embeddings on up to `fan_out` worker threads; results come back
/// indexed by chunk so the caller sees deterministic ordering.
fn embed_chunks_bounded(
    inner: &dyn EmbeddingProvider,
    chunks: &[&[String]],
    fan_out: usize,
) -> Vec<Result<Vec<UnitVector>, EmbeddingError>> {
    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<Result<Vec<UnitVector>, EmbeddingError>>>> =
        (0..chunks.len()).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..fan_out.min(chunks.len()) {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= chunks.len() {
                    break;
                }
                let result = inner.embed(chunks[idx]);
                *results[idx].lock().unwrap() = Some(result);
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("chunk processed"))
        .collect()
}

/// Translate a per-input error index from chunk-local space back to the
/// caller's input indexing.
fn remap_error(err: EmbeddingError, miss_positions: &[usize], chunk_start: usize) -> EmbeddingError {
    let remap = |local: usize| {
        miss_positions
            .get(chunk_start + local)
            .copied()
            .unwrap_or(local)
    };
    match err {
        EmbeddingError::ZeroVector { index } => EmbeddingError::ZeroVector { index: remap(index) },
        EmbeddingError::MissingText {
            provider_id,
            index,
            text_excerpt,
        } => EmbeddingError::MissingText {
            provider_id,
            index: remap(index),
            text_excerpt,
        },
        other => other,
    }
}
