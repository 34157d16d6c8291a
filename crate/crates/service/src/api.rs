//! JSON HTTP API.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use evrag_core::orchestrate::{
    Attribution, ConversationTurn, OrchestrateError, Orchestrator, RetrievedEvidence, Route, Session, SourceKind,
    TurnOutcome,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::store::{make_title, new_session_id, Corruption, SessionStore, StoreError};

pub const MAX_MESSAGE_CHARS: usize = 4000;

pub const DISCLAIMER: &str = "This assistant is for educational purposes only and does not substitute for \
professional medical advice, diagnosis or treatment.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn body(&self) -> Value {
        json!({"error": {"code": self.code, "message": self.message}})
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body())).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) | StoreError::InvalidId(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "session_not_found", e.to_string())
            }
            StoreError::Corrupt { .. } => ApiError::new(StatusCode::CONFLICT, "session_corrupt", e.to_string()),
            StoreError::Exists(_) | StoreError::Io { .. } => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_error", e.to_string())
            }
        }
    }
}

impl From<OrchestrateError> for ApiError {
    fn from(e: OrchestrateError) -> Self {
        let status = match e {
            OrchestrateError::EmptyQuestion => StatusCode::BAD_REQUEST,
            OrchestrateError::IndexUnavailable(_) | OrchestrateError::ProviderUnavailable(_) => {
                StatusCode::SERVICE_UNAVAILABLE
            }
            OrchestrateError::MarkerOutOfRange { .. } | OrchestrateError::Persistence(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    #[serde(default)]
    pub session_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSource {
    pub rank: usize,
    pub title: String,
    /// One decimal, e.g. "58.5".
    pub match_percent: String,
    pub chunk_id: String,
    pub label: String,
    pub cited: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiteratureSource {
    pub rank: usize,
    pub pmid: String,
    pub authors_display: String,
    pub year: i32,
    pub journal: String,
    pub title: String,
    pub url: String,
    pub label: String,
    pub cited: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub session_id: String,
    pub turn_id: u64,
    pub answer: String,
    pub local_sources: Vec<LocalSource>,
    pub literature_sources: Vec<LiteratureSource>,
    pub reformulated_query: String,
    pub degraded: bool,
    pub clarification: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<Route>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_trace: Option<String>,
}

fn local_source(a: &Attribution, e: &RetrievedEvidence) -> LocalSource {
    LocalSource {
        rank: a.rank,
        title: e.display_title.clone(),
        match_percent: evrag_core::orchestrate::percent_match(e.score),
        chunk_id: e.reference.clone(),
        label: a.label.clone(),
        cited: a.cited,
    }
}

fn literature_source(a: &Attribution, e: &RetrievedEvidence) -> Option<LiteratureSource> {
    let article = e.article.as_ref()?;
    Some(LiteratureSource {
        rank: a.rank,
        pmid: article.pmid.clone(),
        authors_display: evrag_core::orchestrate::author_line(&article.authors),
        year: article.year,
        journal: article.journal.clone(),
        title: article.title.clone(),
        url: article.url.clone(),
        label: a.label.clone(),
        cited: a.cited,
    })
}

pub fn chat_response(session_id: &str, outcome: &TurnOutcome) -> ChatResponse {
    let turn = &outcome.turn;
    let mut local_sources = Vec::new();
    let mut literature_sources = Vec::new();
    for a in &outcome.attributions {
        let e = &turn.evidence[a.marker - 1];
        match a.source_kind {
            SourceKind::LocalRegulatory => local_sources.push(local_source(a, e)),
            SourceKind::Literature => literature_sources.extend(literature_source(a, e)),
        }
    }
    ChatResponse {
        session_id: session_id.to_string(),
        turn_id: turn.turn_id,
        answer: turn.text.clone(),
        local_sources,
        literature_sources,
        reformulated_query: turn.reformulated_query.clone().unwrap_or_default(),
        degraded: turn.degraded,
        clarification: turn.clarification,
        route: turn.weights.map(|w| w.route),
        reasoning_trace: turn.reasoning_trace.clone(),
    }
}

/// Everything the handlers share.
pub struct AppState {
    pub orchestrator: Orchestrator,
    pub store: SessionStore,
    /// "template" or "remote".
    pub llm_kind: String,
    pub sources: Value,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl AppState {
    pub fn new(orchestrator: Orchestrator, store: SessionStore, llm_kind: impl Into<String>) -> Self {
        let sources = default_sources(&orchestrator);
        Self {
            orchestrator,
            store,
            llm_kind: llm_kind.into(),
            sources,
            locks: Mutex::new(HashMap::new()),
        }
    }

    fn session_lock(&self, session_id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|p| p.into_inner());
        locks.entry(session_id.to_string()).or_default().clone()
    }

    /// Runs one chat turn. Blocking; call from a blocking context.
    pub fn chat(&self, req: ChatRequest) -> Result<ChatResponse, ApiError> {
        let message = req.message.trim();
        if message.is_empty() {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "empty_message", "message is empty"));
        }
        let len = message.chars().count();
        if len > MAX_MESSAGE_CHARS {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "message_too_long",
                format!("message has {len} characters; the limit is {MAX_MESSAGE_CHARS}"),
            ));
        }
        let session_id = match req.session_id.filter(|s| !s.is_empty()) {
            Some(id) => id,
            None => {
                let session = Session::new(new_session_id());
                self.store.create(&session, &make_title(message))?;
                session.session_id
            }
        };
        let lock = self.session_lock(&session_id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        let stored = self.store.load(&session_id)?;
        if let Some(c) = stored.corruption {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "session_corrupt",
                format!("session {session_id} is damaged at line {}: {}", c.line, c.reason),
            ));
        }
        let mut session = stored.session;
        let outcome = self.orchestrator.run_turn(&mut session, message, &self.store)?;
        Ok(chat_response(&session_id, &outcome))
    }

    pub fn health(&self) -> Value {
        let index = self.orchestrator.index.as_ref();
        json!({
            "status": if index.is_some() { "ok" } else { "degraded" },
            "disclaimer": DISCLAIMER,
            "index": {
                "loaded": index.is_some(),
                "items": index.map_or(0, |i| i.len()),
                "dim": index.map(|i| i.dim()),
            },
            "embedding_dim": self.orchestrator.embedder.dim(),
            "literature_enabled": self.orchestrator.literature.is_some(),
            "llm": self.llm_kind,
            "prompt_version": evrag_core::orchestrate::PROMPT_VERSION,
        })
    }
}

fn default_sources(orchestrator: &Orchestrator) -> Value {
    json!({
        "sources": [
            {
                "kind": "local_regulatory",
                "name": "Regulatory documents",
                "description": "Agency fact sheets, policy documents and video transcripts",
                "enabled": orchestrator.index.is_some(),
            },
            {
                "kind": "literature",
                "name": "Biomedical literature",
                "description": "Peer-reviewed articles retrieved live from PubMed",
                "enabled": orchestrator.literature.is_some(),
            },
        ]
    })
}

#[derive(Debug, Serialize)]
struct SessionDetail {
    session_id: String,
    title: String,
    created_at: chrono::DateTime<chrono::Utc>,
    updated_at: chrono::DateTime<chrono::Utc>,
    turns: Vec<ConversationTurn>,
    #[serde(skip_serializing_if = "Option::is_none")]
    corruption: Option<Corruption>,
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn chat_handler(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<ChatResponse>, ApiError> {
    let req: ChatRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()))?;
    let response = blocking(move || state.chat(req)).await?;
    Ok(Json(response))
}

async fn list_handler(State(state): State<Arc<AppState>>) -> Result<Json<Value>, ApiError> {
    let sessions = blocking(move || Ok(state.store.list()?)).await?;
    Ok(Json(json!({ "sessions": sessions })))
}

async fn session_handler(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<SessionDetail>, ApiError> {
    let stored = blocking(move || Ok(state.store.load(&id)?)).await?;
    let s = stored.session;
    Ok(Json(SessionDetail {
        updated_at: s.updated_at(),
        session_id: s.session_id,
        title: stored.title,
        created_at: s.created_at,
        turns: s.turns,
        corruption: stored.corruption,
    }))
}

async fn health_handler(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(state.health())
}

async fn sources_handler(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(state.sources.clone())
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/chat", post(chat_handler))
        .route("/api/sessions", get(list_handler))
        .route("/api/sessions/{id}", get(session_handler))
        .route("/api/health", get(health_handler))
        .route("/api/sources", get(sources_handler))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
