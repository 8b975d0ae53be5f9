//! Scripted mock of an OpenAI-compatible server so the whole pipeline runs
//! offline. Serves `/v1/chat/completions` with rule-matched responses
//! (controllable usage, delays, and failures) and `/v1/embeddings` with
//! deterministic seeded vectors.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::embedding::seeded_vector;
use crate::llm::estimate_tokens;

/// One response rule. The first rule whose `match_substring` occurs in the
/// concatenated message contents wins; a rule without a pattern matches
/// everything.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default)]
    pub match_substring: Option<String>,
    pub response_text: String,
    #[serde(default)]
    pub prompt_tokens: Option<u64>,
    #[serde(default)]
    pub completion_tokens: Option<u64>,
    #[serde(default = "default_finish_reason")]
    pub finish_reason: String,
    /// Delay before the response headers are written.
    #[serde(default)]
    pub prefill_delay_ms: u64,
    /// Delay between headers and body.
    #[serde(default)]
    pub decode_delay_ms: u64,
    /// Hold the connection open without responding for this long, then
    /// drop it (drives client timeouts).
    #[serde(default)]
    pub stall_ms: u64,
    /// Drop this many connections before serving the response (drives
    /// client retries).
    #[serde(default)]
    pub fail_times: u32,
    #[serde(default)]
    pub status: Option<u16>,
    #[serde(default)]
    pub omit_usage: bool,
}

fn default_finish_reason() -> String {
    "stop".to_string()
}

impl MockRule {
    pub fn replying(text: impl Into<String>) -> Self {
        MockRule {
            match_substring: None,
            response_text: text.into(),
            prompt_tokens: None,
            completion_tokens: None,
            finish_reason: default_finish_reason(),
            prefill_delay_ms: 0,
            decode_delay_ms: 0,
            stall_ms: 0,
            fail_times: 0,
            status: None,
            omit_usage: false,
        }
    }

    pub fn matching(pattern: impl Into<String>, text: impl Into<String>) -> Self {
        MockRule {
            match_substring: Some(pattern.into()),
            ..MockRule::replying(text)
        }
    }

    pub fn with_usage(mut self, prompt_tokens: u64, completion_tokens: u64) -> Self {
        self.prompt_tokens = Some(prompt_tokens);
        self.completion_tokens = Some(completion_tokens);
        self
    }

    pub fn with_finish_reason(mut self, reason: impl Into<String>) -> Self {
        self.finish_reason = reason.into();
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default = "default_embedding_seed")]
    pub embedding_seed: u64,
    pub rules: Vec<MockRule>,
    /// Served when no rule matches.
    #[serde(default)]
    pub fallback: Option<MockRule>,
}

fn default_model() -> String {
    "Qwen3-0.6b".to_string()
}

fn default_embedding_dim() -> usize {
    32
}

fn default_embedding_seed() -> u64 {
    0xE0BED
}

impl MockScript {
    pub fn new(rules: Vec<MockRule>) -> Self {
        MockScript {
            model: default_model(),
            embedding_dim: default_embedding_dim(),
            embedding_seed: default_embedding_seed(),
            rules,
            fallback: None,
        }
    }

    pub fn from_json_file(path: &std::path::Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// A live mock server bound to an ephemeral local port. Shuts down on drop.
pub struct MockLlmServer {
    addr: std::net::SocketAddr,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
    chat_requests: Arc<AtomicUsize>,
    last_request_body: Arc<Mutex<Option<String>>>,
}

impl MockLlmServer {
    pub fn start(script: MockScript) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let chat_requests = Arc::new(AtomicUsize::new(0));
        let last_request_body = Arc::new(Mutex::new(None));
        let fail_counters: Arc<Vec<AtomicU32>> = Arc::new(
            script
                .rules
                .iter()
                .map(|r| AtomicU32::new(r.fail_times))
                .chain(std::iter::once(AtomicU32::new(
                    script.fallback.as_ref().map_or(0, |r| r.fail_times),
                )))
                .collect(),
        );

        let state = Arc::new(ServerState {
            script,
            fail_counters,
            chat_requests: chat_requests.clone(),
            last_request_body: last_request_body.clone(),
        });

        let shutdown_flag = shutdown.clone();
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if shutdown_flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let state = state.clone();
                std::thread::spawn(move || {
                    let _ = handle_connection(stream, &state);
                });
            }
        });

        Ok(MockLlmServer {
            addr,
            shutdown,
            handle: Some(handle),
            chat_requests,
            last_request_body,
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Chat requests that reached a handler (including dropped ones).
    pub fn chat_requests(&self) -> usize {
        self.chat_requests.load(Ordering::SeqCst)
    }

    /// Raw body of the most recent chat request; lets tests assert on the
    /// exact wire format (for example, the think-tag pre-fill).
    pub fn last_request_body(&self) -> Option<String> {
        self.last_request_body.lock().unwrap().clone()
    }
}

impl Drop for MockLlmServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Nudge the accept loop so it observes the flag.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

struct ServerState {
    script: MockScript,
    fail_counters: Arc<Vec<AtomicU32>>,
    chat_requests: Arc<AtomicUsize>,
    last_request_body: Arc<Mutex<Option<String>>>,
}

fn handle_connection(stream: TcpStream, state: &ServerState) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let path = parts.next().unwrap_or("").to_string();

    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some(value) = line
            .to_ascii_lowercase()
            .strip_prefix("content-length:")
            .map(str::trim)
            .and_then(|v| v.parse::<usize>().ok())
        {
            content_length = value;
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    let body = String::from_utf8_lossy(&body).into_owned();

    match (method.as_str(), path.as_str()) {
        ("POST", "/v1/chat/completions") => serve_chat(stream, state, &body),
        ("POST", "/v1/embeddings") => serve_embeddings(stream, state, &body),
        ("GET", "/health") => write_response(stream, 200, "ok", 0, 0),
        _ => write_response(stream, 404, r#"{"error":"not found"}"#, 0, 0),
    }
}

fn serve_chat(stream: TcpStream, state: &ServerState, body: &str) -> std::io::Result<()> {
    state.chat_requests.fetch_add(1, Ordering::SeqCst);
    *state.last_request_body.lock().unwrap() = Some(body.to_string());

    let parsed: serde_json::Value = serde_json::from_str(body).unwrap_or(json!({}));
    let haystack: String = parsed["messages"]
        .as_array()
        .map(|msgs| {
            msgs.iter()
                .filter_map(|m| m["content"].as_str())
                .collect::<Vec<_>>()
                .join("\n")
        })
        .unwrap_or_default();

    let (rule, rule_idx) = match state
        .script
        .rules
        .iter()
        .enumerate()
        .find(|(_, r)| match &r.match_substring {
            Some(pat) => haystack.contains(pat.as_str()),
            None => true,
        }) {
        Some((i, r)) => (r.clone(), i),
        None => match &state.script.fallback {
            Some(r) => (r.clone(), state.script.rules.len()),
            None => {
                return write_response(
                    stream,
                    500,
                    r#"{"error":"no rule matched"}"#,
                    0,
                    0,
                )
            }
        },
    };

    if rule.stall_ms > 0 {
        std::thread::sleep(Duration::from_millis(rule.stall_ms));
        return Ok(()); // drop without responding
    }
    if state.fail_counters[rule_idx]
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |v| v.checked_sub(1))
        .is_ok()
    {
        return Ok(()); // scripted connection drop
    }
    if let Some(status) = rule.status {
        if status != 200 {
            return write_response(stream, status, r#"{"error":"scripted failure"}"#, 0, 0);
        }
    }

    let prompt_tokens = rule
        .prompt_tokens
        .unwrap_or_else(|| estimate_tokens(&haystack));
    let completion_tokens = rule
        .completion_tokens
        .unwrap_or_else(|| estimate_tokens(&rule.response_text));
    let mut response = json!({
        "id": "mock-1",
        "object": "chat.completion",
        "model": state.script.model,
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": rule.response_text},
            "finish_reason": rule.finish_reason,
        }],
        "scripted_latency": {
            "prefill_s": rule.prefill_delay_ms as f64 / 1000.0,
            "decode_s": rule.decode_delay_ms as f64 / 1000.0,
        },
    });
    if !rule.omit_usage {
        response["usage"] = json!({
            "prompt_tokens": prompt_tokens,
            "completion_tokens": completion_tokens,
            "total_tokens": prompt_tokens + completion_tokens,
        });
    }
    write_response(
        stream,
        200,
        &response.to_string(),
        rule.prefill_delay_ms,
        rule.decode_delay_ms,
    )
}

fn serve_embeddings(stream: TcpStream, state: &ServerState, body: &str) -> std::io::Result<()> {
    let parsed: serde_json::Value = serde_json::from_str(body).unwrap_or(json!({}));
    let inputs: Vec<String> = match &parsed["input"] {
        serde_json::Value::String(s) => vec![s.clone()],
        serde_json::Value::Array(items) => items
            .iter()
            .filter_map(|v| v.as_str().map(str::to_string))
            .collect(),
        _ => vec![],
    };
    let data: Vec<serde_json::Value> = inputs
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let v = seeded_vector(state.script.embedding_seed, text, state.script.embedding_dim, i)
                .expect("seeded vector");
            json!({"object": "embedding", "index": i, "embedding": v.values()})
        })
        .collect();
    let response = json!({"object": "list", "data": data, "model": "mock-embedder"});
    write_response(stream, 200, &response.to_string(), 0, 0)
}

fn write_response(
    mut stream: TcpStream,
    status: u16,
    body: &str,
    prefill_delay_ms: u64,
    decode_delay_ms: u64,
) -> std::io::Result<()> {
    if prefill_delay_ms > 0 {
        std::thread::sleep(Duration::from_millis(prefill_delay_ms));
    }
    let reason = match status {
        200 => "OK",
        404 => "Not Found",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        _ => "Error",
    };
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
        body.len()
    )?;
    stream.flush()?;
    if decode_delay_ms > 0 {
        std::thread::sleep(Duration::from_millis(decode_delay_ms));
    }
    stream.write_all(body.as_bytes())?;
    stream.flush()?;
    Ok(())
}
