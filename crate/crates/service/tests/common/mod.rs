#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use chrono::NaiveDate;
use evrag::api::AppState;
use evrag::pipeline;
use evrag::store::SessionStore;
use evrag_core::embedding::EmbeddingClient;
use evrag_core::orchestrate::{LlmProvider, Orchestrator, TemplateLlm};
use evrag_core::pubmed::{CannedTransport, LiteratureSource, MockClock, PubmedClient, PubmedConfig};
use evrag_core::retry::RetryPolicy;
use evrag_core::vindex::HnswIndex;

pub const DIM: usize = 256;
pub const CHUNK_TARGET: usize = 400;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixtures().join(rel)).unwrap()
}

pub fn embedder() -> EmbeddingClient {
    EmbeddingClient::deterministic(DIM)
}

pub fn corpus_index(work: &std::path::Path) -> HnswIndex {
    pipeline::build_corpus_index(&fixtures().join("corpus/manifest.json"), work, &embedder(), CHUNK_TARGET).unwrap()
}

fn pubmed(transport: CannedTransport) -> Arc<dyn LiteratureSource> {
    Arc::new(
        PubmedClient::with_clock(PubmedConfig::default(), Box::new(transport), Arc::new(MockClock::new()))
            .with_retry(RetryPolicy::no_wait(2))
            .with_today(NaiveDate::from_ymd_opt(2024, 12, 15).unwrap()),
    )
}

/// PubMed client answering from the two-article fixtures.
pub fn canned_literature() -> Arc<dyn LiteratureSource> {
    pubmed(CannedTransport::pubmed(
        read_fixture("literature/esearch_two.json"),
        read_fixture("literature/efetch_two.xml"),
    ))
}

/// PubMed client whose transport refuses every request.
pub fn disabled_literature() -> Arc<dyn LiteratureSource> {
    pubmed(CannedTransport::disabled())
}

pub fn state(
    index: Option<HnswIndex>,
    literature: Option<Arc<dyn LiteratureSource>>,
    llm: Arc<dyn LlmProvider>,
    sessions: &std::path::Path,
) -> Arc<AppState> {
    let orch = Orchestrator::new(index.map(Arc::new), embedder(), literature, llm);
    Arc::new(AppState::new(orch, SessionStore::open(sessions).unwrap(), "template"))
}

pub fn template() -> Arc<dyn LlmProvider> {
    Arc::new(TemplateLlm)
}
