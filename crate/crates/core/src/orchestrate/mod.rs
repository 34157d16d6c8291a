//! Per-turn pipeline: reformulate, route, retrieve from both sources, compose
//! a grounded prompt, generate, attribute.

mod attribute;
mod llm;
mod prompt;
mod reformulate;
mod retrieve;
mod route;
mod session;

use std::collections::BTreeSet;
use std::sync::{Arc, LazyLock};

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingClient;
use crate::pubmed::{Article, LiteratureSource};
use crate::vindex::HnswIndex;

pub use attribute::{attribute_sources, author_line, percent_match, Attribution};
pub use llm::{split_reasoning, Completion, HttpLlm, LlmConfig, LlmError, LlmProvider, ScriptedLlm, TemplateLlm};
pub use prompt::{
    compose_prompt, truncate_snippet, Constraints, GenerationRequest, PromptEntry, ReformulationPrompt,
    INSUFFICIENT_ANSWER, INSUFFICIENT_INSTRUCTION, PROMPT_VERSION, REFORMULATE_PROMPT, SNIPPET_LIMIT, SYSTEM_PROMPT,
};
pub use reformulate::{
    clarification_text, extract_entities, reformulate_query, substitute_entity, Reformulation, ReformulationConfig,
    ReformulationMethod, DEFAULT_MARKERS, DEFAULT_WINDOW,
};
pub use retrieve::{
    fuse, literature_score, retrieve_dual, DualRetrieval, K_LIT, K_LOCAL, PAYLOAD_TEXT, PAYLOAD_TITLE,
};
pub use route::{count_hits, route_sources, RouteConfig, REGULATORY_TERMS, SCIENTIFIC_TERMS};
pub use session::{ConversationTurn, Role, Session, TurnFailure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    LocalRegulatory,
    Literature,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::LocalRegulatory => "local_regulatory",
            SourceKind::Literature => "literature",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedEvidence {
    pub source_kind: SourceKind,
    /// Chunk id for local evidence, PMID for literature.
    #[serde(rename = "ref")]
    pub reference: String,
    pub display_title: String,
    pub score: f64,
    pub weight: f64,
    pub snippet: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub article: Option<Article>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Regulatory,
    Scientific,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceWeights {
    pub w_local: f64,
    pub w_lit: f64,
    pub route: Route,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrchestrateError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("index unavailable: {0}")]
    IndexUnavailable(String),
    #[error("language model unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("citation marker [{marker}] does not match any of {evidence} evidence item(s)")]
    MarkerOutOfRange { marker: usize, evidence: usize },
    #[error("could not persist turn: {0}")]
    Persistence(String),
}

impl OrchestrateError {
    pub fn code(&self) -> &'static str {
        match self {
            OrchestrateError::EmptyQuestion => "empty_question",
            OrchestrateError::IndexUnavailable(_) => "index_unavailable",
            OrchestrateError::ProviderUnavailable(_) => "provider_unavailable",
            OrchestrateError::MarkerOutOfRange { .. } => "marker_out_of_range",
            OrchestrateError::Persistence(_) => "persistence",
        }
    }
}

/// Durable storage for turns, called once per appended turn.
pub trait TurnSink {
    fn append(&self, session_id: &str, turn: &ConversationTurn) -> Result<(), String>;
}

/// Discards turns.
pub struct NoSink;

impl TurnSink for NoSink {
    fn append(&self, _: &str, _: &ConversationTurn) -> Result<(), String> {
        Ok(())
    }
}

pub const FAILURE_TEXT: &str = "Sorry, I could not answer this question right now. Please try again.";
pub const INTERRUPTED_TEXT: &str = "This question was not answered because the previous request was interrupted.";

static MARKER_RUN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?: ?\[\d+\])+").expect("valid regex"));
static MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[(\d+)\]").expect("valid regex"));

/// Removes markers that point past the evidence list and returns the valid
/// ones, ascending and deduplicated.
pub fn resolve_markers(answer: &str, evidence_len: usize) -> (String, Vec<usize>) {
    let mut cited = BTreeSet::new();
    let cleaned = MARKER_RUN.replace_all(answer, |run: &Captures| {
        let kept: Vec<&str> = MARKER
            .captures_iter(&run[0])
            .filter(|c| c[1].parse::<usize>().is_ok_and(|n| (1..=evidence_len).contains(&n)))
            .map(|c| {
                cited.insert(c[1].parse::<usize>().expect("checked"));
                c.get(0).expect("whole match").as_str()
            })
            .collect();
        if kept.is_empty() {
            return String::new();
        }
        let lead = if run[0].starts_with(' ') { " " } else { "" };
        format!("{lead}{}", kept.join(""))
    });
    (cleaned.into_owned(), cited.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnOutcome {
    pub turn: ConversationTurn,
    pub attributions: Vec<Attribution>,
}

pub struct Orchestrator {
    pub index: Option<Arc<HnswIndex>>,
    pub embedder: EmbeddingClient,
    pub literature: Option<Arc<dyn LiteratureSource>>,
    pub llm: Arc<dyn LlmProvider>,
    pub reformulation: ReformulationConfig,
    pub routing: RouteConfig,
    pub k_local: usize,
    pub k_lit: usize,
}

impl Orchestrator {
    pub fn new(
        index: Option<Arc<HnswIndex>>,
        embedder: EmbeddingClient,
        literature: Option<Arc<dyn LiteratureSource>>,
        llm: Arc<dyn LlmProvider>,
    ) -> Self {
        Self {
            index,
            embedder,
            literature,
            llm,
            reformulation: ReformulationConfig::default(),
            routing: RouteConfig::default(),
            k_local: K_LOCAL,
            k_lit: K_LIT,
        }
    }

    fn append(
        &self,
        session: &mut Session,
        turn: ConversationTurn,
        sink: &dyn TurnSink,
    ) -> Result<ConversationTurn, OrchestrateError> {
        let stored = session.push(turn).clone();
        if let Err(e) = sink.append(&session.session_id, &stored) {
            session.turns.pop();
            return Err(OrchestrateError::Persistence(e));
        }
        Ok(stored)
    }

    fn fail(
        &self,
        session: &mut Session,
        mut turn: ConversationTurn,
        err: OrchestrateError,
        sink: &dyn TurnSink,
    ) -> OrchestrateError {
        tracing::error!(session = %session.session_id, error = %err, "turn failed");
        turn.text = FAILURE_TEXT.to_string();
        turn.failure = Some(TurnFailure {
            code: err.code().to_string(),
            message: err.to_string(),
        });
        match self.append(session, turn, sink) {
            Ok(_) => err,
            Err(persist) => persist,
        }
    }

    /// Answers `user_text` within `session`, appending the user turn and the
    /// assistant turn. Failures after the user turn is stored are recorded as
    /// a failed assistant turn and also returned.
    pub fn run_turn(
        &self,
        session: &mut Session,
        user_text: &str,
        sink: &dyn TurnSink,
    ) -> Result<TurnOutcome, OrchestrateError> {
        let question = user_text.trim();
        if question.is_empty() {
            return Err(OrchestrateError::EmptyQuestion);
        }
        if session.expected_role() == Role::Assistant {
            let mut repair = ConversationTurn::new(0, Role::Assistant, INTERRUPTED_TEXT);
            repair.failure = Some(TurnFailure {
                code: "interrupted".into(),
                message: "no answer was recorded for this question".into(),
            });
            self.append(session, repair, sink)?;
        }
        let history = session.turns.clone();
        self.append(session, ConversationTurn::new(0, Role::User, question), sink)?;
        let mut turn = ConversationTurn::new(0, Role::Assistant, "");

        let reform = reformulate_query(&history, question, self.llm.as_ref(), &self.reformulation);
        turn.reformulated_query = Some(reform.query.clone());
        if reform.ambiguous {
            turn.text = clarification_text(&reform.candidates);
            turn.clarification = true;
            let turn = self.append(session, turn, sink)?;
            return Ok(TurnOutcome {
                turn,
                attributions: Vec::new(),
            });
        }

        let weights = route_sources(&reform.query, &self.routing);
        turn.weights = Some(weights);
        let retrieval = match retrieve_dual(
            &reform.query,
            &weights,
            self.index.as_deref(),
            &self.embedder,
            self.literature.as_ref(),
            self.k_local,
            self.k_lit,
        ) {
            Ok(r) => r,
            Err(e) => return Err(self.fail(session, turn, e, sink)),
        };
        turn.degraded = retrieval.degraded;

        let request = compose_prompt(&reform.query, &retrieval.evidence);
        let completion = match self.llm.generate(&request) {
            Ok(c) => c,
            Err(e) => {
                let err = OrchestrateError::ProviderUnavailable(e.to_string());
                return Err(self.fail(session, turn, err, sink));
            }
        };
        let (text, cited) = resolve_markers(&completion.text, retrieval.evidence.len());
        let attributions = attribute_sources(&retrieval.evidence, &cited)?;
        turn.text = text;
        turn.cited_markers = cited;
        turn.reasoning_trace = completion.reasoning_trace;
        turn.evidence = retrieval.evidence;
        let turn = self.append(session, turn, sink)?;
        Ok(TurnOutcome { turn, attributions })
    }
}
