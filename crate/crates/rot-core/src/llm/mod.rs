//! OpenAI-compatible chat completion client with retry, usage accounting,
//! and latency capture, plus the in-repo mock server for offline runs.

mod mock;

pub use mock::{MockLlmServer, MockRule, MockScript};

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::prompt::{PromptBundle, PromptMode};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("chat endpoint returned HTTP {status}: {body_excerpt}")]
    Http { status: u16, body_excerpt: String },
    #[error("chat protocol error: {0}")]
    Protocol(String),
}

/// Where and how to call the chat endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_initial_ms: u64,
    pub concurrency: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: std::env::var("ROT_LLM_URL")
                .unwrap_or_else(|_| "http://127.0.0.1:8000".to_string()),
            api_key: std::env::var("ROT_LLM_API_KEY").ok(),
            model: "Qwen3-0.6b".to_string(),
            temperature: 0.0,
            max_tokens: 16_384,
            timeout_ms: 120_000,
            max_retries: 3,
            backoff_initial_ms: 250,
            concurrency: 4,
        }
    }
}

/// Wall-clock decomposition of one sample. With a non-streaming transport,
/// `prefill_s` is the time until response headers arrive and `decode_s` the
/// body read time; the mock server scripts both for reproducible records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub retrieval_s: f64,
    pub prefill_s: f64,
    pub decode_s: f64,
    pub total_s: f64,
}

impl LatencyBreakdown {
    pub fn zero() -> Self {
        LatencyBreakdown {
            retrieval_s: 0.0,
            prefill_s: 0.0,
            decode_s: 0.0,
            total_s: 0.0,
        }
    }

    /// Fold the retrieval time into the breakdown and re-derive the total.
    pub fn with_retrieval(mut self, retrieval_s: f64) -> Self {
        self.retrieval_s = retrieval_s;
        self.total_s = self.retrieval_s + self.prefill_s + self.decode_s;
        self
    }
}

/// One completion with its telemetry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// True when the provider reported no usage and the counts are the
    /// documented chars/4 estimate.
    pub usage_estimated: bool,
    pub finish_reason: Option<String>,
    /// Out of tokens: generation stopped because `max_tokens` was reached.
    pub oot: bool,
    pub latency: LatencyBreakdown,
    pub model_id: String,
    /// True when the latency figures came scripted from the server rather
    /// than from wall-clock measurement.
    pub timing_scripted: bool,
}

/// Documented local token estimate used when a response carries no usage
/// object: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64 + 3) / 4
}

pub struct LlmClient {
    cfg: EndpointConfig,
    client: reqwest::blocking::Client,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
    #[serde(default)]
    model: Option<String>,
    /// Mock-server extension: exact scripted delays, preferred over
    /// measured wall clock so offline runs replay byte-identically.
    #[serde(default)]
    scripted_latency: Option<ScriptedLatency>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ChatUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Debug, Deserialize)]
struct ScriptedLatency {
    prefill_s: f64,
    decode_s: f64,
}

/// The tag that opens the model's reasoning span; think-injection pre-fills
/// the assistant turn with it plus the template prefix.
pub const THINK_OPEN: &str = "<think>";

impl LlmClient {
    pub fn new(cfg: EndpointConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| LlmError::Protocol(e.to_string()))?;
        Ok(LlmClient { cfg, client })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    fn messages_for(&self, bundle: &PromptBundle) -> Vec<serde_json::Value> {
        let mut messages = vec![json!({"role": "user", "content": bundle.user_text})];
        if bundle.mode == PromptMode::RotTi {
            let prefix = bundle.think_prefix.as_deref().unwrap_or("");
            messages.push(json!({
                "role": "assistant",
                "content": format!("{THINK_OPEN}\n{prefix}"),
            }));
        }
        messages
    }

    /// Send the prompt and return the completion with usage and latency.
    /// Transport failures retry with exponential backoff up to the
    /// configured attempts; HTTP non-success is an error carrying the
    /// status and a body excerpt.
    pub fn complete(&self, bundle: &PromptBundle) -> Result<LlmResponse, LlmError> {
        let messages = self.messages_for(bundle);
        let mut body = json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
        });
        if bundle.mode == PromptMode::RotTi {
            // Continuation semantics: generation resumes inside the
            // pre-filled assistant turn instead of opening a new one.
            body["continue_final_message"] = json!(true);
            body["add_generation_prompt"] = json!(false);
        }

        let mut attempt = 0u32;
        let (response, prefill_measured) = loop {
            attempt += 1;
            let mut req = self
                .client
                .post(format!("{}/v1/chat/completions", self.cfg.base_url.trim_end_matches('/')))
                .header("content-type", "application/json")
                .json(&body);
            if let Some(key) = &self.cfg.api_key {
                req = req.header("authorization", format!("Bearer {key}"));
            }
            let started = Instant::now();
            match req.send() {
                Ok(resp) => break (resp, started.elapsed().as_secs_f64()),
                Err(e) if attempt <= self.cfg.max_retries => {
                    let wait = self.cfg.backoff_initial_ms << (attempt - 1);
                    log::warn!(
                        "chat request for {} failed ({e}); retry {attempt}/{} in {wait} ms",
                        bundle.problem_id,
                        self.cfg.max_retries
                    );
                    std::thread::sleep(Duration::from_millis(wait));
                }
                Err(e) => {
                    return Err(LlmError::Transport {
                        attempts: attempt,
                        message: e.to_string(),
                    })
                }
            }
        };

        let status = response.status();
        let decode_started = Instant::now();
        let text = response.text().map_err(|e| LlmError::Transport {
            attempts: attempt,
            message: e.to_string(),
        })?;
        let decode_measured = decode_started.elapsed().as_secs_f64();

        if !status.is_success() {
            let excerpt: String = text.chars().take(300).collect();
            return Err(LlmError::Http {
                status: status.as_u16(),
                body_excerpt: excerpt,
            });
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| LlmError::Protocol(format!("bad chat response: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| LlmError::Protocol("response has no choices".to_string()))?;
        let completion = choice.message.content.unwrap_or_default();

        let (input_tokens, output_tokens, usage_estimated) = match parsed.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens, false),
            None => {
                log::warn!(
                    "no usage reported for {}; falling back to the local chars/4 estimate",
                    bundle.problem_id
                );
                let prompt_len: u64 = self
                    .messages_for(bundle)
                    .iter()
                    .map(|m| estimate_tokens(m["content"].as_str().unwrap_or("")))
                    .sum();
                (prompt_len, estimate_tokens(&completion), true)
            }
        };

        let (prefill_s, decode_s, timing_scripted) = match parsed.scripted_latency {
            Some(s) => (s.prefill_s, s.decode_s, true),
            None => (prefill_measured, decode_measured, false),
        };
        let finish_reason = choice.finish_reason;
        let oot = finish_reason.as_deref() == Some("length");
        Ok(LlmResponse {
            text: completion,
            input_tokens,
            output_tokens,
            usage_estimated,
            finish_reason,
            oot,
            latency: LatencyBreakdown {
                retrieval_s: 0.0,
                prefill_s,
                decode_s,
                total_s: prefill_s + decode_s,
            },
            model_id: parsed.model.unwrap_or_else(|| self.cfg.model.clone()),
            timing_scripted,
        })
    }
}
