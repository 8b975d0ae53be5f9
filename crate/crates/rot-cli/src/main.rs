//! Command-line driver for the retrieval-of-thought engine.

mod config;

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rot_core::corpus::{load_problems, load_templates, save_templates, EvalProblem};
use rot_core::embedding::{
    CachedProvider, EmbeddingCache, EmbeddingProvider, HttpEmbeddingProvider,
    PrecomputedProvider, SeededProvider,
};
use rot_core::eval::{
    bench_retrieval, load_records, run_eval, similarity_histogram, summarize, EvalConfig,
};
use rot_core::graph::{
    build_graph, load_graph_binary, load_graph_xml, save_graph_binary, save_graph_xml,
    ThoughtGraph,
};
use rot_core::llm::{EndpointConfig, LlmClient, MockLlmServer, MockScript};
use rot_core::pricing::PriceTable;
use rot_core::prompt::{PromptMode, DEFAULT_MARKERS};
use rot_core::retrieval::{alpha_sweep, assemble, RetrievalConfig};
use rot_core::synthetic::{
    clustered_provider, synthetic_corpus, synthetic_problems, ClusterSpec, SyntheticCorpusSpec,
};

use config::FileConfig;

#[derive(Parser)]
#[command(name = "rot", version, about = "Thought-graph retrieval engine and evaluation harness")]
struct Cli {
    /// Optional TOML config file; command-line flags win over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a thought graph from a template corpus.
    BuildGraph(BuildGraphArgs),
    /// Print structure and parameters of a stored graph.
    InspectGraph(InspectGraphArgs),
    /// Retrieve an assembled template for one problem.
    Retrieve(RetrieveArgs),
    /// Run problems through the endpoint across prompt modes.
    RunEval(RunEvalArgs),
    /// Aggregate a records file into per-group metrics.
    Summarize(SummarizeArgs),
    /// Measure retrieval+traversal latency over a query set.
    BenchRetrieval(BenchArgs),
    /// Sweep the first-step weight or the semantic-edge threshold.
    Sweep(SweepArgs),
    /// Best-match similarity histogram of step texts against the graph.
    SimHist(SimHistArgs),
    /// Generate a seeded synthetic corpus (and optionally problems and a
    /// clustered embedding cache) for offline experiments.
    GenCorpus(GenCorpusArgs),
    /// Serve the scripted mock chat/embedding endpoint.
    MockLlm(MockLlmArgs),
}

#[derive(Args, Clone)]
struct EmbeddingArgs {
    /// Embedding provider: seeded, http, or cache-file.
    #[arg(long)]
    provider: Option<String>,
    /// Seed for the deterministic test provider.
    #[arg(long)]
    embed_seed: Option<u64>,
    /// Embedding dimension.
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Embeddings endpoint URL (http provider).
    #[arg(long)]
    embed_url: Option<String>,
    /// Embedding model name (http provider).
    #[arg(long)]
    embed_model: Option<String>,
    /// Embedding cache file: the store for cache-file, a warm start for
    /// the other providers.
    #[arg(long)]
    embed_cache: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct EndpointArgs {
    /// Chat endpoint base URL (env ROT_LLM_URL when unset).
    #[arg(long)]
    llm_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    timeout_s: Option<u64>,
    #[arg(long)]
    retries: Option<u32>,
    /// Bounded request/worker concurrency.
    #[arg(long)]
    concurrency: Option<usize>,
}

#[derive(Args, Clone)]
struct RetrievalArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tau_edge: Option<f64>,
    #[arg(long)]
    tau_term: Option<f64>,
    #[arg(long)]
    l_max: Option<usize>,
    #[arg(long)]
    semantic_weight: Option<f64>,
    #[arg(long)]
    flow_weight: Option<f64>,
}

#[derive(Args)]
struct BuildGraphArgs {
    #[arg(long)]
    templates: PathBuf,
    /// Binary graph output path.
    #[arg(long)]
    out: PathBuf,
    /// Optional XML export alongside the binary.
    #[arg(long)]
    xml: Option<PathBuf>,
    #[arg(long)]
    tau_edge: Option<f64>,
    /// Persist the embedding cache after the build.
    #[arg(long)]
    save_cache: Option<PathBuf>,
    #[command(flatten)]
    embedding: EmbeddingArgs,
}

#[derive(Args)]
struct InspectGraphArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    problem_file: Option<PathBuf>,
    /// Problem id within --problem-file (default: first problem).
    #[arg(long)]
    problem_id: Option<String>,
    /// Ad-hoc problem text instead of a file.
    #[arg(long, conflicts_with = "problem_file")]
    problem_text: Option<String>,
    /// Template type for --problem-text.
    #[arg(long)]
    template_type: Option<String>,
    /// Comma-separated tags for --problem-text.
    #[arg(long)]
    tags: Option<String>,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    retrieval: RetrievalArgs,
    #[command(flatten)]
    embedding: EmbeddingArgs,
}

#[derive(Args)]
struct RunEvalArgs {
    #[arg(long)]
    problems: PathBuf,
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Comma-separated modes: cot, rot, rot_ti.
    #[arg(long, default_value = "cot,rot,rot_ti")]
    modes: String,
    /// Output directory for records.jsonl, manifest.json, summary.json.
    #[arg(long)]
    out: PathBuf,
    /// Continue an interrupted run in --out.
    #[arg(long)]
    resume: bool,
    /// Dataset label stamped into records (default: problems file stem).
    #[arg(long)]
    dataset: Option<String>,
    /// Price table JSON (default: the bundled table).
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Comma-separated path-switch markers.
    #[arg(long)]
    markers: Option<String>,
    /// Record scripted/zeroed timing for byte-reproducible records.
    #[arg(long)]
    deterministic_timing: bool,
    #[command(flatten)]
    endpoint: EndpointArgs,
    #[command(flatten)]
    retrieval: RetrievalArgs,
    #[command(flatten)]
    embedding: EmbeddingArgs,
}

#[derive(Args)]
struct SummarizeArgs {
    /// records.jsonl file or the run directory containing it.
    #[arg(long)]
    records: PathBuf,
    /// Write the summary JSON here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    problems: PathBuf,
    /// Number of queries from the problem file (cycled if needed).
    #[arg(long, default_value_t = 100)]
    queries: usize,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    retrieval: RetrievalArgs,
    #[command(flatten)]
    embedding: EmbeddingArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// What to sweep: alpha or tau.
    #[arg(value_parser = ["alpha", "tau"])]
    kind: String,
    #[arg(long)]
    graph: PathBuf,
    /// Problems file (alpha sweep only).
    #[arg(long)]
    problems: Option<PathBuf>,
    /// Comma-separated alpha values.
    #[arg(long, default_value = "0.0,0.2,0.4,0.6,0.8,1.0")]
    alphas: String,
    /// Comma-separated thresholds.
    #[arg(long, default_value = "0.80,0.82,0.84,0.86,0.88,0.90,0.92,0.94")]
    taus: String,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    retrieval: RetrievalArgs,
    #[command(flatten)]
    embedding: EmbeddingArgs,
}

#[derive(Args)]
struct SimHistArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Plain-text file with one step per line.
    #[arg(long)]
    steps_file: PathBuf,
    #[arg(long, default_value_t = 5)]
    bins: usize,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    embedding: EmbeddingArgs,
}

#[derive(Args)]
struct GenCorpusArgs {
    /// Number of templates to generate.
    #[arg(long, default_value_t = 100)]
    templates: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    steps_min: usize,
    #[arg(long, default_value_t = 6)]
    steps_max: usize,
    /// Also generate this many problems.
    #[arg(long)]
    problems: Option<usize>,
    #[arg(long)]
    problems_out: Option<PathBuf>,
    /// Write a clustered embedding cache covering the generated texts
    /// (usable via --provider cache-file).
    #[arg(long)]
    clustered_cache: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 24)]
    clusters: usize,
    #[arg(long, default_value_t = 0.05)]
    node_noise: f64,
    #[arg(long, default_value_t = 0.08)]
    query_noise: f64,
}

#[derive(Args)]
struct MockLlmArgs {
    /// Mock script JSON.
    #[arg(long)]
    script: PathBuf,
    /// Write the bound URL to this file once listening.
    #[arg(long)]
    url_file: Option<PathBuf>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let file_cfg = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::BuildGraph(args) => cmd_build_graph(args, &file_cfg),
        Command::InspectGraph(args) => cmd_inspect_graph(args),
        Command::Retrieve(args) => cmd_retrieve(args, &file_cfg),
        Command::RunEval(args) => cmd_run_eval(args, &file_cfg),
        Command::Summarize(args) => cmd_summarize(args),
        Command::BenchRetrieval(args) => cmd_bench(args, &file_cfg),
        Command::Sweep(args) => cmd_sweep(args, &file_cfg),
        Command::SimHist(args) => cmd_sim_hist(args, &file_cfg),
        Command::GenCorpus(args) => cmd_gen_corpus(args),
        Command::MockLlm(args) => cmd_mock_llm(args),
    }
}

fn make_provider(
    args: &EmbeddingArgs,
    file_cfg: &FileConfig,
) -> Result<CachedProvider<'static>> {
    let emb = &file_cfg.embedding;
    let kind = args
        .provider
        .clone()
        .or_else(|| emb.provider.clone())
        .unwrap_or_else(|| "seeded".to_string());
    let dim = args.embed_dim.or(emb.dim).unwrap_or(64);
    let inner: Box<dyn EmbeddingProvider> = match kind.as_str() {
        "seeded" => {
            let seed = args.embed_seed.or(emb.seed).unwrap_or(42);
            Box::new(SeededProvider::new(seed, dim))
        }
        "http" => {
            let url = args
                .embed_url
                .clone()
                .or_else(|| emb.url.clone())
                .or_else(|| std::env::var("ROT_EMBED_URL").ok())
                .context("http embedding provider needs --embed-url or ROT_EMBED_URL")?;
            let model = args
                .embed_model
                .clone()
                .or_else(|| emb.model.clone())
                .unwrap_or_else(|| "jina-embeddings-v2-small-en".to_string());
            let api_key = std::env::var("ROT_EMBED_API_KEY").ok();
            Box::new(HttpEmbeddingProvider::new(
                url,
                model,
                api_key,
                dim,
                Duration::from_secs(60),
            )?)
        }
        "cache-file" => {
            let path = args
                .embed_cache
                .clone()
                .context("cache-file provider needs --embed-cache")?;
            Box::new(PrecomputedProvider::from_cache_file(&path)?)
        }
        other => bail!("unknown provider {other:?} (expected seeded, http, or cache-file)"),
    };
    let mut provider = CachedProvider::new(inner);
    if kind != "cache-file" {
        if let Some(path) = &args.embed_cache {
            if path.exists() {
                provider = provider.with_warm_cache(EmbeddingCache::load(path)?)?;
            }
        }
    }
    Ok(provider)
}

fn retrieval_config(args: &RetrievalArgs, file_cfg: &FileConfig) -> RetrievalConfig {
    let base = file_cfg.retrieval_config();
    RetrievalConfig {
        alpha: args.alpha.unwrap_or(base.alpha),
        tau_edge: args.tau_edge.unwrap_or(base.tau_edge),
        tau_term: args.tau_term.unwrap_or(base.tau_term),
        l_max: args.l_max.unwrap_or(base.l_max),
        semantic_weight: args.semantic_weight.unwrap_or(base.semantic_weight),
        flow_weight: args.flow_weight.unwrap_or(base.flow_weight),
    }
}

fn endpoint_config(args: &EndpointArgs, file_cfg: &FileConfig) -> EndpointConfig {
    let base = file_cfg.endpoint_config();
    EndpointConfig {
        base_url: args.llm_url.clone().unwrap_or(base.base_url),
        api_key: base.api_key,
        model: args.model.clone().unwrap_or(base.model),
        temperature: args.temperature.unwrap_or(base.temperature),
        max_tokens: args.max_tokens.unwrap_or(base.max_tokens),
        timeout_ms: args.timeout_s.map(|s| s * 1000).unwrap_or(base.timeout_ms),
        max_retries: args.retries.unwrap_or(base.max_retries),
        backoff_initial_ms: base.backoff_initial_ms,
        concurrency: args.concurrency.unwrap_or(base.concurrency),
    }
}

fn load_graph_any(path: &Path) -> Result<ThoughtGraph> {
    let graph = if path.extension().is_some_and(|e| e == "xml") {
        load_graph_xml(path)?
    } else {
        load_graph_binary(path)?
    };
    Ok(graph)
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| anyhow::anyhow!("bad {what} value {s:?}: {e}"))
        })
        .collect()
}

fn cmd_build_graph(args: BuildGraphArgs, file_cfg: &FileConfig) -> Result<()> {
    let templates = load_templates(&args.templates)?;
    println!("loaded {} templates from {}", templates.len(), args.templates.display());
    let provider = make_provider(&args.embedding, file_cfg)?;
    let tau_edge = args
        .tau_edge
        .unwrap_or_else(|| file_cfg.retrieval_config().tau_edge);
    let started = std::time::Instant::now();
    let graph = build_graph(&templates, &provider, tau_edge)?;
    println!(
        "built graph: {} nodes, {} sequential edges, {} semantic edges (tau_edge {}, {:.2?})",
        graph.node_count(),
        graph.sequential_edge_count(),
        graph.semantic_edge_count(),
        tau_edge,
        started.elapsed()
    );
    save_graph_binary(&graph, &args.out)?;
    println!("wrote {}", args.out.display());
    if let Some(xml) = &args.xml {
        save_graph_xml(&graph, xml)?;
        println!("wrote {}", xml.display());
    }
    if let Some(cache_path) = &args.save_cache {
        provider.cache().save(cache_path)?;
        println!("wrote embedding cache {} ({} entries)", cache_path.display(), provider.cache().len());
    }
    Ok(())
}

fn cmd_inspect_graph(args: InspectGraphArgs) -> Result<()> {
    let graph = load_graph_any(&args.graph)?;
    graph.validate()?;
    let mean_degree =
        graph.semantic_edge_count() as f64 / graph.node_count().max(1) as f64;
    if args.json {
        let info = serde_json::json!({
            "nodes": graph.node_count(),
            "templates": graph.template_count(),
            "sequential_edges": graph.sequential_edge_count(),
            "semantic_edges_directed": graph.semantic_edge_count(),
            "mean_semantic_degree": mean_degree,
            "tau_edge": graph.params().tau_edge,
            "provider_id": graph.params().provider_id,
            "dim": graph.params().dim,
            "corpus_fingerprint": graph.corpus_fingerprint(),
        });
        println!("{}", serde_json::to_string_pretty(&info)?);
    } else {
        println!("nodes:                  {}", graph.node_count());
        println!("templates:              {}", graph.template_count());
        println!("sequential edges:       {}", graph.sequential_edge_count());
        println!("semantic edges (dir.):  {}", graph.semantic_edge_count());
        println!("mean semantic degree:   {mean_degree:.3}");
        println!("tau_edge:               {}", graph.params().tau_edge);
        println!("provider:               {}", graph.params().provider_id);
        println!("dim:                    {}", graph.params().dim);
        println!("fingerprint:            {}", graph.corpus_fingerprint());
        println!("invariants:             ok");
    }
    Ok(())
}

fn cmd_retrieve(args: RetrieveArgs, file_cfg: &FileConfig) -> Result<()> {
    let graph = load_graph_any(&args.graph)?;
    let problem = if let Some(text) = &args.problem_text {
        EvalProblem {
            problem_id: "adhoc".to_string(),
            statement: rot_core::sanitize_text(text),
            gold_answer: "?".to_string(),
            template_type: args.template_type.clone().unwrap_or_default(),
            knowledge_tags: args
                .tags
                .as_deref()
                .map(|t| parse_list::<String>(t, "tag"))
                .transpose()?
                .unwrap_or_default(),
        }
    } else {
        let path = args
            .problem_file
            .clone()
            .context("need --problem-file or --problem-text")?;
        let problems = load_problems(&path)?;
        match &args.problem_id {
            Some(id) => problems
                .into_iter()
                .find(|p| &p.problem_id == id)
                .with_context(|| format!("problem {id:?} not found"))?,
            None => problems
                .into_iter()
                .next()
                .context("problem file is empty")?,
        }
    };
    let provider = make_provider(&args.embedding, file_cfg)?;
    let cfg = retrieval_config(&args.retrieval, file_cfg);
    cfg.validate()?;
    let query = provider.embed(&[problem.statement.clone()])?.remove(0);
    let template = assemble(&graph, &problem, &query, &cfg)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&template)?);
    } else {
        println!(
            "assembled {} steps (stop: {:?})",
            template.len(),
            template.termination_reason
        );
        for (i, (node, scored)) in template
            .path
            .iter()
            .zip(&template.per_step)
            .enumerate()
        {
            println!(
                "  {}. ({}, {})  r_q={:.4} r_s={} r_f={} total={:.4}",
                i + 1,
                node.template_id,
                node.step_index,
                scored.r_q,
                scored.r_s,
                scored.r_f,
                scored.total
            );
            println!("     {}", template.step_texts[i]);
        }
    }
    Ok(())
}

fn cmd_run_eval(args: RunEvalArgs, file_cfg: &FileConfig) -> Result<()> {
    let problems = load_problems(&args.problems)?;
    let modes: Vec<PromptMode> = parse_list(&args.modes, "mode")?;
    let graph = args.graph.as_deref().map(load_graph_any).transpose()?;
    let needs_graph = modes.iter().any(|m| *m != PromptMode::Cot);
    let provider = if needs_graph {
        Some(make_provider(&args.embedding, file_cfg)?)
    } else {
        None
    };
    let prices = match &args.prices {
        Some(path) => PriceTable::from_json_file(path)?,
        None => PriceTable::bundled(),
    };
    let client = LlmClient::new(endpoint_config(&args.endpoint, file_cfg))?;
    let dataset = args.dataset.clone().unwrap_or_else(|| {
        args.problems
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".to_string())
    });
    let markers = match &args.markers {
        Some(m) => parse_list::<String>(m, "marker")?,
        None => DEFAULT_MARKERS.iter().map(|s| s.to_string()).collect(),
    };
    let cfg = EvalConfig {
        dataset,
        modes,
        retrieval: retrieval_config(&args.retrieval, file_cfg),
        markers,
        deterministic_timing: args.deterministic_timing,
        abort_after_consecutive_failures: 3,
        resume: args.resume,
    };
    let records = run_eval(
        &problems,
        graph.as_ref(),
        provider.as_ref().map(|p| p as &dyn EmbeddingProvider),
        &client,
        &prices,
        &cfg,
        Some(&args.out),
    )?;
    println!(
        "completed {} records -> {}",
        records.len(),
        args.out.join("records.jsonl").display()
    );
    let summary = summarize(&records)?;
    let summary_path = args.out.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
    println!("wrote {}", summary_path.display());
    print_summary(&summary);
    Ok(())
}

fn cmd_summarize(args: SummarizeArgs) -> Result<()> {
    let path = if args.records.is_dir() {
        args.records.join("records.jsonl")
    } else {
        args.records.clone()
    };
    let records = load_records(&path)?;
    let summary = summarize(&records)?;
    let text = serde_json::to_string_pretty(&summary)?;
    if let Some(out) = &args.out {
        std::fs::write(out, &text)?;
        println!("wrote {}", out.display());
    }
    println!("{text}");
    Ok(())
}

fn print_summary(summary: &rot_core::eval::RunSummary) {
    for g in &summary.groups {
        println!(
            "{:8} {:12} {:10}  n={:4} acc={:6.2}%  in={:9.1} out={:9.1} cost=${:.4} lat={:.3}s retr={:.4}s switches={:.2}",
            g.mode.to_string(),
            g.model_id,
            g.dataset,
            g.n,
            g.accuracy_pct,
            g.mean_input_tokens,
            g.mean_output_tokens,
            g.mean_cost_usd,
            g.mean_total_latency_s,
            g.mean_retrieval_s,
            g.mean_path_switches
        );
    }
    for d in &summary.rot_ti_vs_cot {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:+.1}%"));
        println!(
            "rot_ti vs cot [{} / {}]: out-tokens {} cost {} latency {} switches {}",
            d.model_id,
            d.dataset,
            fmt(d.output_tokens_pct),
            fmt(d.cost_pct),
            fmt(d.latency_pct),
            fmt(d.path_switches_pct)
        );
    }
}

fn cmd_bench(args: BenchArgs, file_cfg: &FileConfig) -> Result<()> {
    let graph = load_graph_any(&args.graph)?;
    let problems = load_problems(&args.problems)?;
    if problems.is_empty() {
        bail!("problem file is empty");
    }
    let provider = make_provider(&args.embedding, file_cfg)?;
    let cfg = retrieval_config(&args.retrieval, file_cfg);
    let selected: Vec<EvalProblem> = (0..args.queries)
        .map(|i| problems[i % problems.len()].clone())
        .collect();
    let statements: Vec<String> = selected.iter().map(|p| p.statement.clone()).collect();
    let embeddings = provider.embed(&statements)?;
    let queries: Vec<_> = selected.into_iter().zip(embeddings).collect();
    let stats = bench_retrieval(&graph, &queries, &cfg, args.repetitions)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
    } else {
        println!(
            "retrieval latency over {} samples: mean {:.4}s  p50 {:.4}s  p95 {:.4}s  min {:.4}s  max {:.4}s",
            stats.n, stats.mean_s, stats.p50_s, stats.p95_s, stats.min_s, stats.max_s
        );
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs, file_cfg: &FileConfig) -> Result<()> {
    let graph = load_graph_any(&args.graph)?;
    let cfg = retrieval_config(&args.retrieval, file_cfg);
    match args.kind.as_str() {
        "alpha" => {
            let path = args
                .problems
                .clone()
                .context("alpha sweep needs --problems")?;
            let problems = load_problems(&path)?;
            let provider = make_provider(&args.embedding, file_cfg)?;
            let alphas: Vec<f64> = parse_list(&args.alphas, "alpha")?;
            let statements: Vec<String> =
                problems.iter().map(|p| p.statement.clone()).collect();
            let embeddings = provider.embed(&statements)?;
            let pairs: Vec<_> = problems.into_iter().zip(embeddings).collect();
            let points = alpha_sweep(&graph, &pairs, &alphas, &cfg)?;
            if args.json {
                println!("{}", serde_json::to_string_pretty(&points)?);
            } else {
                for p in points {
                    println!(
                        "alpha={:.2}  p_step0={:.4}  mean_similarity={:.4}  (n={})",
                        p.alpha, p.p_step0, p.mean_similarity, p.n_selected
                    );
                }
            }
        }
        "tau" => {
            let taus: Vec<f64> = parse_list(&args.taus, "tau")?;
            let points = graph.semantic_degree_profile(&taus)?;
            if args.json {
                println!("{}", serde_json::to_string_pretty(&points)?);
            } else {
                for p in points {
                    println!("tau={:.3}  mean_semantic_degree={:.4}", p.tau, p.mean_semantic_degree);
                }
            }
        }
        other => bail!("unknown sweep kind {other:?}"),
    }
    Ok(())
}

fn cmd_sim_hist(args: SimHistArgs, file_cfg: &FileConfig) -> Result<()> {
    let graph = load_graph_any(&args.graph)?;
    let text = std::fs::read_to_string(&args.steps_file)
        .with_context(|| format!("reading {}", args.steps_file.display()))?;
    let steps: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if steps.is_empty() {
        bail!("no steps in {}", args.steps_file.display());
    }
    let provider = make_provider(&args.embedding, file_cfg)?;
    let hist = similarity_histogram(&steps, &graph, &provider, args.bins)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&hist)?);
    } else {
        let total = hist.counts.iter().sum::<u64>().max(1) as f64;
        for (i, count) in hist.counts.iter().enumerate() {
            println!(
                "{:5.0}%-{:3.0}%  {:6} ({:5.1}%)",
                hist.edges[i] * 100.0,
                hist.edges[i + 1] * 100.0,
                count,
                *count as f64 / total * 100.0
            );
        }
    }
    Ok(())
}

fn cmd_gen_corpus(args: GenCorpusArgs) -> Result<()> {
    let spec = SyntheticCorpusSpec {
        n_templates: args.templates,
        steps_min: args.steps_min,
        steps_max: args.steps_max,
        seed: args.seed,
    };
    let corpus = synthetic_corpus(&spec);
    save_templates(&corpus, &args.out)?;
    println!("wrote {} templates to {}", corpus.len(), args.out.display());

    let problems = match args.problems {
        Some(n) => {
            let problems = synthetic_problems(n, args.seed);
            let path = args
                .problems_out
                .clone()
                .unwrap_or_else(|| args.out.with_extension("problems.jsonl"));
            let mut lines = String::new();
            for p in &problems {
                lines.push_str(&serde_json::to_string(p)?);
                lines.push('\n');
            }
            std::fs::write(&path, lines)?;
            println!("wrote {} problems to {}", problems.len(), path.display());
            problems
        }
        None => Vec::new(),
    };

    if let Some(cache_path) = &args.clustered_cache {
        let cluster = ClusterSpec {
            n_clusters: args.clusters,
            dim: args.dim,
            node_noise: args.node_noise,
            query_noise: args.query_noise,
            seed: args.seed,
        };
        let provider = clustered_provider(&corpus, &problems, &cluster)?;
        // Route all texts through a caching wrapper to persist them.
        let cached = CachedProvider::new(Box::new(provider));
        let mut texts: Vec<String> = Vec::new();
        for t in &corpus {
            texts.extend(t.steps.iter().map(|s| rot_core::sanitize_text(s)));
        }
        texts.extend(problems.iter().map(|p| rot_core::sanitize_text(&p.statement)));
        cached.embed(&texts)?;
        cached.cache().save(cache_path)?;
        println!(
            "wrote clustered embedding cache {} ({} entries, dim {})",
            cache_path.display(),
            cached.cache().len(),
            args.dim
        );
    }
    Ok(())
}

fn cmd_mock_llm(args: MockLlmArgs) -> Result<()> {
    let script = MockScript::from_json_file(&args.script)?;
    let server = MockLlmServer::start(script)?;
    println!("{}", server.base_url());
    if let Some(path) = &args.url_file {
        std::fs::write(path, server.base_url())?;
    }
    log::info!("mock endpoint listening at {} (ctrl-c to stop)", server.base_url());
    loop {
        std::thread::sleep(Duration::from_secs(3600));
    }
}
