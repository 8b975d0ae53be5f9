//! Optional TOML configuration file. Every field mirrors a command-line
//! flag; flags take precedence.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

use rot_core::llm::EndpointConfig;
use rot_core::retrieval::RetrievalConfig;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub endpoint: EndpointSection,
    #[serde(default)]
    pub retrieval: RetrievalSection,
    #[serde(default)]
    pub embedding: EmbeddingSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSection {
    pub url: Option<String>,
    pub model: Option<String>,
    pub max_tokens: Option<u32>,
    pub temperature: Option<f64>,
    pub timeout_s: Option<u64>,
    pub retries: Option<u32>,
    pub concurrency: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalSection {
    pub alpha: Option<f64>,
    pub tau_edge: Option<f64>,
    pub tau_term: Option<f64>,
    pub l_max: Option<usize>,
    pub semantic_weight: Option<f64>,
    pub flow_weight: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSection {
    pub provider: Option<String>,
    pub seed: Option<u64>,
    pub dim: Option<usize>,
    pub url: Option<String>,
    pub model: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Defaults overlaid with the config file's retrieval section.
    pub fn retrieval_config(&self) -> RetrievalConfig {
        let base = RetrievalConfig::default();
        RetrievalConfig {
            alpha: self.retrieval.alpha.unwrap_or(base.alpha),
            tau_edge: self.retrieval.tau_edge.unwrap_or(base.tau_edge),
            tau_term: self.retrieval.tau_term.unwrap_or(base.tau_term),
            l_max: self.retrieval.l_max.unwrap_or(base.l_max),
            semantic_weight: self
                .retrieval
                .semantic_weight
                .unwrap_or(base.semantic_weight),
            flow_weight: self.retrieval.flow_weight.unwrap_or(base.flow_weight),
        }
    }

    /// Defaults (including environment variables) overlaid with the config
    /// file's endpoint section.
    pub fn endpoint_config(&self) -> EndpointConfig {
        let base = EndpointConfig::default();
        EndpointConfig {
            base_url: self.endpoint.url.clone().unwrap_or(base.base_url),
            api_key: base.api_key,
            model: self.endpoint.model.clone().unwrap_or(base.model),
            temperature: self.endpoint.temperature.unwrap_or(base.temperature),
            max_tokens: self.endpoint.max_tokens.unwrap_or(base.max_tokens),
            timeout_ms: self
                .endpoint
                .timeout_s
                .map(|s| s * 1000)
                .unwrap_or(base.timeout_ms),
            max_retries: self.endpoint.retries.unwrap_or(base.max_retries),
            backoff_initial_ms: base.backoff_initial_ms,
            concurrency: self.endpoint.concurrency.unwrap_or(base.concurrency),
        }
    }
}
