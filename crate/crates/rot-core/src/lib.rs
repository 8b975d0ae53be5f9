//! Retrieval-of-thought engine: stores step-decomposed reasoning templates
//! as a weighted thought graph, assembles problem-specific templates at
//! inference time by reward-guided traversal, renders them into prompts,
//! and measures the accuracy/token/cost/latency trade-offs of the result.

pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod graph;
pub mod llm;
pub mod pricing;
pub mod prompt;
pub mod retrieval;
pub mod synthetic;

pub use corpus::{
    load_problems, load_templates, sanitize_text, save_templates, CorpusError, EvalProblem,
    Template,
};
pub use embedding::{
    cosine, normalized_similarity, CachedProvider, EmbeddingCache, EmbeddingError,
    EmbeddingProvider, HttpEmbeddingProvider, PrecomputedProvider, SeededProvider, UnitVector,
};
pub use eval::{
    bench_retrieval, extract_answer, load_records, replay_record, run_eval, similarity_histogram,
    summarize, EvalConfig, EvalError, LatencyStats, RunRecord, RunSummary,
};
pub use graph::{
    build_graph, load_graph_binary, load_graph_xml, save_graph_binary, save_graph_xml, EdgeKind,
    GraphError, NodeId, ThoughtGraph,
};
pub use llm::{EndpointConfig, LlmClient, LlmError, LlmResponse, MockLlmServer, MockScript};
pub use pricing::{PriceTable, PricingError};
pub use prompt::{count_path_switches, render_prompt, PromptBundle, PromptError, PromptMode};
pub use retrieval::{
    alpha_sweep, assemble, filter_candidates, select_initial_node, traverse, AssembledTemplate,
    RetrievalConfig, RetrievalError, ScoredCandidate, TerminationReason,
};
