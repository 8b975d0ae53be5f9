//! Benchmark orchestration: per-sample records, the run loop with bounded
//! workers and resumable persistence, aggregation, and replay.

mod answers;
mod bench;
mod hist;

pub use answers::{answers_match, canonicalize_answer, extract_answer};
pub use bench::{bench_retrieval, LatencyStats};
pub use hist::{similarity_histogram, SimilarityHistogram};

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::EvalProblem;
use crate::embedding::{EmbeddingError, EmbeddingProvider, UnitVector};
use crate::graph::{GraphError, NodeId, ThoughtGraph};
use crate::llm::{LatencyBreakdown, LlmClient, LlmError};
use crate::pricing::{PriceTable, PricingError};
use crate::prompt::{
    count_path_switches_with, render_prompt, PromptError, PromptMode, DEFAULT_MARKERS,
};
use crate::retrieval::{assemble, RetrievalConfig, RetrievalError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no records to summarize")]
    NoRecords,
    #[error("modes {modes:?} require a thought graph and an embedding provider")]
    GraphRequired { modes: Vec<PromptMode> },
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("records file {path} line {line} is malformed: {message}")]
    MalformedRecord {
        path: String,
        line: usize,
        message: String,
    },
    #[error("existing run at {path} was produced with a different configuration (manifest hash {found} != {expected}); refusing to resume")]
    ManifestMismatch {
        path: String,
        found: String,
        expected: String,
    },
    #[error("endpoint unreachable: {consecutive} consecutive samples failed; {persisted} record(s) persisted for resume")]
    EndpointUnreachable { consecutive: u32, persisted: usize },
}

/// Where the latency figures in a record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingSource {
    /// Wall-clock measurements.
    Measured,
    /// Exact values scripted by the mock server.
    Scripted,
    /// Deterministic-timing run against a server that scripts nothing;
    /// fields are zeroed rather than jittering.
    Suppressed,
}

/// Everything recorded for one (problem, mode) sample. The prompt and
/// response texts are persisted so every derived field can be recomputed
/// offline (see [`replay_record`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem_id: String,
    pub dataset: String,
    pub mode: PromptMode,
    pub model_id: String,
    pub gold_answer: String,
    pub prompt_text: String,
    pub think_prefix: Option<String>,
    pub response_text: String,
    pub prompt_chars: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub usage_estimated: bool,
    pub cost_usd: f64,
    pub latency: LatencyBreakdown,
    pub timing_source: TimingSource,
    pub extracted_answer: Option<String>,
    pub correct: bool,
    pub oot: bool,
    pub failed: bool,
    pub failure: Option<String>,
    pub fallback_to_cot: bool,
    pub path_switches: u64,
    pub template_path: Option<Vec<NodeId>>,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// Label stamped into every record (usually the benchmark name).
    pub dataset: String,
    pub modes: Vec<PromptMode>,
    pub retrieval: RetrievalConfig,
    pub markers: Vec<String>,
    /// Record scripted/zeroed timing instead of wall clock so repeated runs
    /// produce byte-identical records.
    pub deterministic_timing: bool,
    /// Abort the run once this many samples in a row fail at transport
    /// level; records so far stay on disk for resume.
    pub abort_after_consecutive_failures: u32,
    pub resume: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            dataset: "default".to_string(),
            modes: vec![PromptMode::Cot],
            retrieval: RetrievalConfig::default(),
            markers: DEFAULT_MARKERS.iter().map(|s| s.to_string()).collect(),
            deterministic_timing: false,
            abort_after_consecutive_failures: 3,
            resume: false,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RunManifest {
    config_hash: String,
    dataset: String,
    model: String,
    modes: Vec<PromptMode>,
    graph_fingerprint: Option<String>,
    price_table_digest: String,
    n_problems: usize,
    problems_digest: String,
}

fn config_hash(
    cfg: &EvalConfig,
    client: &LlmClient,
    prices: &PriceTable,
    graph: Option<&ThoughtGraph>,
    problems_digest: &str,
) -> String {
    let ep = client.config();
    let canonical = serde_json::json!({
        "dataset": cfg.dataset,
        "modes": cfg.modes,
        "retrieval": cfg.retrieval,
        "markers": cfg.markers,
        "deterministic_timing": cfg.deterministic_timing,
        "model": ep.model,
        "temperature": ep.temperature,
        "max_tokens": ep.max_tokens,
        "graph_fingerprint": graph.map(|g| g.corpus_fingerprint().to_string()),
        "price_table_digest": prices.digest(),
        "problems_digest": problems_digest,
    });
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

fn problems_digest(problems: &[EvalProblem]) -> String {
    let mut hasher = Sha256::new();
    for p in problems {
        hasher.update(p.problem_id.as_bytes());
        hasher.update([0x1f]);
        hasher.update(p.statement.as_bytes());
        hasher.update([0x1f]);
        hasher.update(p.gold_answer.as_bytes());
        hasher.update([0x1d]);
    }
    hex::encode(hasher.finalize())
}

/// Run every problem under every mode against the endpoint. Records are
/// appended to `out_dir/records.jsonl` (when given) before any
/// summarization; a manifest makes interrupted runs resumable. Retrieval
/// failures fall back to plain step-by-step prompting for that sample with
/// the fallback flagged.
pub fn run_eval(
    problems: &[EvalProblem],
    graph: Option<&ThoughtGraph>,
    embedder: Option<&dyn EmbeddingProvider>,
    client: &LlmClient,
    prices: &PriceTable,
    cfg: &EvalConfig,
    out_dir: Option<&Path>,
) -> Result<Vec<RunRecord>, EvalError> {
    cfg.retrieval.validate()?;
    prices.get(&client.config().model)?;
    let rot_modes: Vec<PromptMode> = cfg
        .modes
        .iter()
        .copied()
        .filter(|m| *m != PromptMode::Cot)
        .collect();
    if !rot_modes.is_empty() && (graph.is_none() || embedder.is_none()) {
        return Err(EvalError::GraphRequired { modes: rot_modes });
    }

    // Query embeddings are computed up front, outside the per-sample
    // retrieval clock (matching the retrieval benchmark's definition).
    let query_embeddings: Vec<Option<UnitVector>> = if rot_modes.is_empty() {
        vec![None; problems.len()]
    } else {
        let embedder = embedder.expect("checked above");
        let statements: Vec<String> = problems.iter().map(|p| p.statement.clone()).collect();
        embedder
            .embed(&statements)?
            .into_iter()
            .map(Some)
            .collect()
    };

    let digest = problems_digest(problems);
    let hash = config_hash(cfg, client, prices, graph, &digest);
    let manifest = RunManifest {
        config_hash: hash,
        dataset: cfg.dataset.clone(),
        model: client.config().model.clone(),
        modes: cfg.modes.clone(),
        graph_fingerprint: graph.map(|g| g.corpus_fingerprint().to_string()),
        price_table_digest: prices.digest(),
        n_problems: problems.len(),
        problems_digest: digest,
    };
    let mut sink = RecordSink::open(out_dir, &manifest, cfg.resume)?;

    struct Job<'a> {
        idx: usize,
        problem: &'a EvalProblem,
        mode: PromptMode,
        query: Option<&'a UnitVector>,
    }
    let mut jobs = Vec::new();
    let mut idx = 0usize;
    for (p, q) in problems.iter().zip(&query_embeddings) {
        for &mode in &cfg.modes {
            if !sink.already_done(&p.problem_id, mode) {
                jobs.push(Job {
                    idx,
                    problem: p,
                    mode,
                    query: q.as_ref(),
                });
            }
            idx += 1;
        }
    }

    let workers = client.config().concurrency.max(1).min(jobs.len().max(1));
    let next_job = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Result<RunRecord, EvalError>)>();

    let mut fresh: BTreeMap<usize, RunRecord> = BTreeMap::new();
    let mut run_error: Option<EvalError> = None;
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let jobs = &jobs;
            let next_job = &next_job;
            let stop = &stop;
            scope.spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next_job.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let job = &jobs[i];
                let record = run_sample(job.problem, job.mode, graph, job.query, client, prices, cfg);
                if tx.send((job.idx, record)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // Persist in job order regardless of completion order so the
        // records file is deterministic.
        let mut pending: BTreeMap<usize, Result<RunRecord, EvalError>> = BTreeMap::new();
        let mut next_to_write = jobs.first().map(|j| j.idx);
        let mut consecutive_failures = 0u32;
        let job_order: Vec<usize> = jobs.iter().map(|j| j.idx).collect();
        let mut order_pos = 0usize;
        for received in rx {
            pending.insert(received.0, received.1);
            while let Some(expected) = next_to_write {
                let Some(result) = pending.remove(&expected) else {
                    break;
                };
                match result {
                    Ok(record) => {
                        if let Err(e) = sink.append(&record) {
                            run_error = Some(e);
                            stop.store(true, Ordering::SeqCst);
                            break;
                        }
                        consecutive_failures = if record.failed {
                            consecutive_failures + 1
                        } else {
                            0
                        };
                        fresh.insert(expected, record);
                        if consecutive_failures >= cfg.abort_after_consecutive_failures.max(1)
                        {
                            run_error = Some(EvalError::EndpointUnreachable {
                                consecutive: consecutive_failures,
                                persisted: sink.persisted_count(),
                            });
                            stop.store(true, Ordering::SeqCst);
                        }
                    }
                    Err(e) => {
                        run_error = Some(e);
                        stop.store(true, Ordering::SeqCst);
                    }
                }
                order_pos += 1;
                next_to_write = job_order.get(order_pos).copied();
            }
            if run_error.is_some() {
                break;
            }
        }
    });
    if let Some(e) = run_error {
        return Err(e);
    }

    // Merge resumed records with fresh ones, in job order.
    let mut all = Vec::with_capacity(problems.len() * cfg.modes.len());
    let mut fresh_iter = fresh.into_values();
    for p in problems {
        for &mode in &cfg.modes {
            if let Some(existing) = sink.resumed(&p.problem_id, mode) {
                all.push(existing.clone());
            } else if let Some(record) = fresh_iter.next() {
                all.push(record);
            }
        }
    }
    Ok(all)
}

fn run_sample(
    problem: &EvalProblem,
    mode: PromptMode,
    graph: Option<&ThoughtGraph>,
    query: Option<&UnitVector>,
    client: &LlmClient,
    prices: &PriceTable,
    cfg: &EvalConfig,
) -> Result<RunRecord, EvalError> {
    let mut fallback_to_cot = false;
    let mut template = None;
    let mut retrieval_s = 0.0f64;
    if mode != PromptMode::Cot {
        let graph = graph.expect("validated by run_eval");
        let query = query.expect("validated by run_eval");
        let started = Instant::now();
        match assemble(graph, problem, query, &cfg.retrieval) {
            Ok(t) => template = Some(t),
            Err(RetrievalError::NoTemplateFound { .. }) => {
                log::warn!(
                    "problem {}: no template found; falling back to plain prompting",
                    problem.problem_id
                );
                fallback_to_cot = true;
            }
            Err(e) => return Err(e.into()),
        }
        if !cfg.deterministic_timing {
            retrieval_s = started.elapsed().as_secs_f64();
        }
    }
    let effective_mode = if mode == PromptMode::Cot || fallback_to_cot {
        PromptMode::Cot
    } else {
        mode
    };
    let bundle = render_prompt(problem, template.as_ref(), effective_mode)?;
    let model_id = client.config().model.clone();

    let base = RunRecord {
        problem_id: problem.problem_id.clone(),
        dataset: cfg.dataset.clone(),
        mode,
        model_id: model_id.clone(),
        gold_answer: problem.gold_answer.clone(),
        prompt_text: bundle.user_text.clone(),
        think_prefix: bundle.think_prefix.clone(),
        response_text: String::new(),
        prompt_chars: bundle.prompt_chars(),
        input_tokens: 0,
        output_tokens: 0,
        usage_estimated: false,
        cost_usd: 0.0,
        latency: LatencyBreakdown::zero().with_retrieval(retrieval_s),
        timing_source: if cfg.deterministic_timing {
            TimingSource::Suppressed
        } else {
            TimingSource::Measured
        },
        extracted_answer: None,
        correct: false,
        oot: false,
        failed: false,
        failure: None,
        fallback_to_cot,
        path_switches: 0,
        template_path: template.as_ref().map(|t| t.path.clone()),
    };

    match client.complete(&bundle) {
        Ok(resp) => {
            let (latency, timing_source) = reconcile_timing(
                resp.latency,
                retrieval_s,
                resp.timing_scripted,
                cfg.deterministic_timing,
            );
            let extracted = extract_answer(&resp.text);
            let correct = !resp.oot
                && extracted
                    .as_deref()
                    .is_some_and(|e| answers_match(e, &problem.gold_answer));
            let cost_usd = prices.cost_usd(resp.input_tokens, resp.output_tokens, &model_id)?;
            let path_switches = count_path_switches_with(&resp.text, &cfg.markers);
            Ok(RunRecord {
                response_text: resp.text,
                input_tokens: resp.input_tokens,
                output_tokens: resp.output_tokens,
                usage_estimated: resp.usage_estimated,
                cost_usd,
                latency,
                timing_source,
                extracted_answer: extracted,
                correct,
                oot: resp.oot,
                path_switches,
                ..base
            })
        }
        Err(e @ (LlmError::Transport { .. } | LlmError::Http { .. } | LlmError::Protocol(_))) => {
            log::warn!("problem {} ({mode}): {e}", problem.problem_id);
            Ok(RunRecord {
                failed: true,
                failure: Some(e.to_string()),
                ..base
            })
        }
    }
}

fn reconcile_timing(
    measured: LatencyBreakdown,
    retrieval_s: f64,
    scripted: bool,
    deterministic: bool,
) -> (LatencyBreakdown, TimingSource) {
    if scripted {
        // Scripted prefill/decode come from the server verbatim. The
        // retrieval clock is ours: zeroed under deterministic timing.
        let lat = measured.with_retrieval(if deterministic { 0.0 } else { retrieval_s });
        (lat, TimingSource::Scripted)
    } else if deterministic {
        (LatencyBreakdown::zero(), TimingSource::Suppressed)
    } else {
        (measured.with_retrieval(retrieval_s), TimingSource::Measured)
    }
}

/// Recompute every derived field of a record from its persisted prompt,
/// response, and usage. A faithful pipeline satisfies
/// `replay_record(r) == r` byte for byte.
pub fn replay_record(
    record: &RunRecord,
    prices: &PriceTable,
    markers: &[String],
) -> Result<RunRecord, EvalError> {
    let mut out = record.clone();
    let prefix_chars = record
        .think_prefix
        .as_deref()
        .map(|p| p.chars().count() as u64)
        .unwrap_or(0);
    out.prompt_chars = record.prompt_text.chars().count() as u64 + prefix_chars;
    out.extracted_answer = if record.failed {
        None
    } else {
        extract_answer(&record.response_text)
    };
    out.correct = !record.oot
        && !record.failed
        && out
            .extracted_answer
            .as_deref()
            .is_some_and(|e| answers_match(e, &record.gold_answer));
    out.cost_usd = if record.failed {
        0.0
    } else {
        prices.cost_usd(record.input_tokens, record.output_tokens, &record.model_id)?
    };
    out.path_switches = if record.failed {
        0
    } else {
        count_path_switches_with(&record.response_text, markers)
    };
    out.latency.total_s =
        out.latency.retrieval_s + out.latency.prefill_s + out.latency.decode_s;
    Ok(out)
}

struct RecordSink {
    file: Option<File>,
    path: Option<PathBuf>,
    resumed: BTreeMap<(String, PromptMode), RunRecord>,
    persisted: usize,
}

impl RecordSink {
    fn open(
        out_dir: Option<&Path>,
        manifest: &RunManifest,
        resume: bool,
    ) -> Result<Self, EvalError> {
        let Some(dir) = out_dir else {
            return Ok(RecordSink {
                file: None,
                path: None,
                resumed: BTreeMap::new(),
                persisted: 0,
            });
        };
        let io_err = |path: &Path, source| EvalError::Io {
            path: path.display().to_string(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let manifest_path = dir.join("manifest.json");
        let records_path = dir.join("records.jsonl");

        let mut resumed = BTreeMap::new();
        if resume && manifest_path.exists() {
            let text = std::fs::read_to_string(&manifest_path)
                .map_err(|e| io_err(&manifest_path, e))?;
            let existing: RunManifest =
                serde_json::from_str(&text).map_err(|e| EvalError::MalformedRecord {
                    path: manifest_path.display().to_string(),
                    line: 1,
                    message: e.to_string(),
                })?;
            if existing.config_hash != manifest.config_hash {
                return Err(EvalError::ManifestMismatch {
                    path: manifest_path.display().to_string(),
                    found: existing.config_hash,
                    expected: manifest.config_hash.clone(),
                });
            }
            if records_path.exists() {
                let mut dropped_failed = 0usize;
                for (i, line) in BufReader::new(
                    File::open(&records_path).map_err(|e| io_err(&records_path, e))?,
                )
                .lines()
                .enumerate()
                {
                    let line = line.map_err(|e| io_err(&records_path, e))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let record: RunRecord =
                        serde_json::from_str(&line).map_err(|e| EvalError::MalformedRecord {
                            path: records_path.display().to_string(),
                            line: i + 1,
                            message: e.to_string(),
                        })?;
                    // Failed-transport samples are retried on resume.
                    if record.failed {
                        dropped_failed += 1;
                        resumed.remove(&(record.problem_id.clone(), record.mode));
                        continue;
                    }
                    resumed.insert((record.problem_id.clone(), record.mode), record);
                }
                if dropped_failed > 0 {
                    log::info!(
                        "resume: re-running {dropped_failed} previously failed sample(s)"
                    );
                    let mut compacted = String::new();
                    for record in resumed.values() {
                        compacted.push_str(&serde_json::to_string(record).expect("serializes"));
                        compacted.push('\n');
                    }
                    std::fs::write(&records_path, compacted)
                        .map_err(|e| io_err(&records_path, e))?;
                }
            }
        } else {
            let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
            std::fs::write(&manifest_path, text).map_err(|e| io_err(&manifest_path, e))?;
            if records_path.exists() && !resume {
                std::fs::remove_file(&records_path).map_err(|e| io_err(&records_path, e))?;
            }
        }

        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&records_path)
            .map_err(|e| io_err(&records_path, e))?;
        let persisted = resumed.len();
        Ok(RecordSink {
            file: Some(file),
            path: Some(records_path),
            resumed,
            persisted,
        })
    }

    fn already_done(&self, problem_id: &str, mode: PromptMode) -> bool {
        self.resumed.contains_key(&(problem_id.to_string(), mode))
    }

    fn resumed(&self, problem_id: &str, mode: PromptMode) -> Option<&RunRecord> {
        self.resumed.get(&(problem_id.to_string(), mode))
    }

    fn persisted_count(&self) -> usize {
        self.persisted
    }

    fn append(&mut self, record: &RunRecord) -> Result<(), EvalError> {
        self.persisted += 1;
        let Some(file) = self.file.as_mut() else {
            return Ok(());
        };
        let line = serde_json::to_string(record).expect("record serializes");
        let path = self.path.as_ref().expect("path set with file");
        writeln!(file, "{line}").map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        file.flush().map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Aggregates for one (mode, model, dataset) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub mode: PromptMode,
    pub model_id: String,
    pub dataset: String,
    pub n: usize,
    pub n_correct: usize,
    pub n_oot: usize,
    pub n_failed: usize,
    pub n_fallback: usize,
    pub n_estimated_usage: usize,
    pub accuracy_pct: f64,
    pub mean_input_tokens: f64,
    pub mean_output_tokens: f64,
    pub mean_cost_usd: f64,
    pub mean_total_latency_s: f64,
    pub mean_retrieval_s: f64,
    pub mean_path_switches: f64,
}

/// Percentage change of think-injection relative to the plain baseline, per
/// (model, dataset). `None` when the baseline mean is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub model_id: String,
    pub dataset: String,
    pub output_tokens_pct: Option<f64>,
    pub input_tokens_pct: Option<f64>,
    pub cost_pct: Option<f64>,
    pub latency_pct: Option<f64>,
    pub path_switches_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub groups: Vec<GroupSummary>,
    pub rot_ti_vs_cot: Vec<DeltaSummary>,
}

/// Group records by (mode, model, dataset) and compute the metric means.
/// Records are sorted internally, so the result is invariant under input
/// permutation. Accuracy never counts out-of-token or failed samples as
/// correct (they are recorded as incorrect at run time and stay in the
/// denominator).
pub fn summarize(records: &[RunRecord]) -> Result<RunSummary, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.dataset, &a.model_id, a.mode, &a.problem_id)
            .cmp(&(&b.dataset, &b.model_id, b.mode, &b.problem_id))
    });

    let mut groups: Vec<GroupSummary> = Vec::new();
    for record in sorted {
        let need_new = groups.last().is_none_or(|g| {
            (g.mode, &g.model_id, &g.dataset)
                != (record.mode, &record.model_id, &record.dataset)
        });
        if need_new {
            groups.push(GroupSummary {
                mode: record.mode,
                model_id: record.model_id.clone(),
                dataset: record.dataset.clone(),
                n: 0,
                n_correct: 0,
                n_oot: 0,
                n_failed: 0,
                n_fallback: 0,
                n_estimated_usage: 0,
                accuracy_pct: 0.0,
                mean_input_tokens: 0.0,
                mean_output_tokens: 0.0,
                mean_cost_usd: 0.0,
                mean_total_latency_s: 0.0,
                mean_retrieval_s: 0.0,
                mean_path_switches: 0.0,
            });
        }
        let g = groups.last_mut().expect("just ensured");
        g.n += 1;
        g.n_correct += usize::from(record.correct);
        g.n_oot += usize::from(record.oot);
        g.n_failed += usize::from(record.failed);
        g.n_fallback += usize::from(record.fallback_to_cot);
        g.n_estimated_usage += usize::from(record.usage_estimated);
        g.mean_input_tokens += record.input_tokens as f64;
        g.mean_output_tokens += record.output_tokens as f64;
        g.mean_cost_usd += record.cost_usd;
        g.mean_total_latency_s += record.latency.total_s;
        g.mean_retrieval_s += record.latency.retrieval_s;
        g.mean_path_switches += record.path_switches as f64;
    }
    for g in &mut groups {
        let n = g.n as f64;
        g.accuracy_pct = g.n_correct as f64 / n * 100.0;
        g.mean_input_tokens /= n;
        g.mean_output_tokens /= n;
        g.mean_cost_usd /= n;
        g.mean_total_latency_s /= n;
        g.mean_retrieval_s /= n;
        g.mean_path_switches /= n;
    }

    let mut deltas = Vec::new();
    for cot in groups.iter().filter(|g| g.mode == PromptMode::Cot) {
        if let Some(ti) = groups.iter().find(|g| {
            g.mode == PromptMode::RotTi
                && g.model_id == cot.model_id
                && g.dataset == cot.dataset
        }) {
            let pct = |ti_mean: f64, cot_mean: f64| {
                (cot_mean != 0.0).then(|| (ti_mean - cot_mean) / cot_mean * 100.0)
            };
            deltas.push(DeltaSummary {
                model_id: cot.model_id.clone(),
                dataset: cot.dataset.clone(),
                output_tokens_pct: pct(ti.mean_output_tokens, cot.mean_output_tokens),
                input_tokens_pct: pct(ti.mean_input_tokens, cot.mean_input_tokens),
                cost_pct: pct(ti.mean_cost_usd, cot.mean_cost_usd),
                latency_pct: pct(ti.mean_total_latency_s, cot.mean_total_latency_s),
                path_switches_pct: pct(ti.mean_path_switches, cot.mean_path_switches),
            });
        }
    }
    Ok(RunSummary {
        groups,
        rot_ti_vs_cot: deltas,
    })
}

/// Load records back from a JSONL file written by [`run_eval`].
pub fn load_records(path: &Path) -> Result<Vec<RunRecord>, EvalError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| EvalError::Io {
        path: display.clone(),
        source,
    })?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| EvalError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line).map_err(|e| EvalError::MalformedRecord {
                path: display.clone(),
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(records)
}
