//! Elucidation corpus generation: prompt strategies, chat backends and
//! corpus assembly/sub-sampling.

mod client;
mod corpus;
mod prompt;

pub use client::{
    request_elucidation, BackendError, ChatBackend, ChatEndpointConfig, Completion,
    ElucidationError, HttpBackend, MockBackend, API_KEY_ENV, MOCK_MODEL,
};
pub use corpus::{build_corpus, meta_path, subset_corpus, CorpusSummary, CoteCorpus, CoteRecord};
pub use prompt::{build_prompt, Prompt, PromptStrategy, Provenance, StrategyKind, PLACEHOLDERS};
