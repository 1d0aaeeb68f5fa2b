//! HTTP front end: start sessions, stream their events, fetch traces.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/v1/ask` | `{question, follow_up_of?}` → `{session_id}` |
//! | GET | `/v1/sessions/{id}/events` | event stream, resumable with `Last-Event-Seq` |
//! | GET | `/v1/sessions/{id}/trace` | session document |
//! | GET | `/healthz` | liveness |

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Body;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::StreamExt;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::Engine;
use crate::events::{AgentEvent, EventBus};
use crate::planner::PlannerSession;

pub const LAST_EVENT_SEQ: &str = "last-event-seq";

#[derive(Debug, Clone, Deserialize)]
pub struct AskRequest {
    pub question: String,
    #[serde(default)]
    pub follow_up_of: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AskResponse {
    pub session_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Purged(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, msg) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::NotFound(id) => (StatusCode::NOT_FOUND, format!("unknown session `{id}`")),
            ApiError::Purged(id) => (StatusCode::CONFLICT, format!("session `{id}` was purged")),
        };
        (status, Json(json!({ "error": msg }))).into_response()
    }
}

struct SessionEntry {
    question: String,
    bus: Arc<EventBus>,
    finished: Mutex<Option<PlannerSession>>,
}

enum Slot {
    Live(Arc<SessionEntry>),
    Purged,
}

pub struct AppState {
    engine: Engine,
    sessions: RwLock<HashMap<String, Slot>>,
}

impl AppState {
    pub fn new(engine: Engine) -> Arc<Self> {
        Arc::new(Self {
            engine,
            sessions: RwLock::new(HashMap::new()),
        })
    }

    fn entry(&self, id: &str) -> Result<Arc<SessionEntry>, ApiError> {
        match self.sessions.read().unwrap_or_else(|e| e.into_inner()).get(id) {
            Some(Slot::Live(e)) => Ok(Arc::clone(e)),
            Some(Slot::Purged) => Err(ApiError::Purged(id.to_string())),
            None => Err(ApiError::NotFound(id.to_string())),
        }
    }

    /// Drops a session's events and trace; later requests for it get 409.
    pub fn purge(&self, id: &str) -> bool {
        let mut map = self.sessions.write().unwrap_or_else(|e| e.into_inner());
        match map.get(id) {
            Some(Slot::Live(_)) => {
                map.insert(id.to_string(), Slot::Purged);
                true
            }
            _ => false,
        }
    }

    /// Question text for a follow-up: the prior exchange, then the new question.
    fn follow_up_question(&self, prior_id: &str, question: &str) -> Result<String, ApiError> {
        let prior = self.entry(prior_id)?;
        let answer = prior
            .finished
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .as_ref()
            .and_then(|s| s.final_answer().map(|a| a.answer_text.clone()));
        Ok(match answer {
            Some(answer) => format!(
                "Earlier question: {}\nEarlier answer: {}\n\nFollow-up question: {}",
                prior.question, answer, question
            ),
            None => format!("Earlier question: {}\n\nFollow-up question: {}", prior.question, question),
        })
    }

    /// Validates the request and starts the session in the background.
    pub fn start_session(self: &Arc<Self>, req: AskRequest) -> Result<String, ApiError> {
        if req.question.trim().is_empty() {
            return Err(ApiError::BadRequest("question must not be empty".into()));
        }
        let question = match &req.follow_up_of {
            Some(prior) => self.follow_up_question(prior, req.question.trim())?,
            None => req.question.trim().to_string(),
        };
        let id = uuid::Uuid::new_v4().to_string();
        let bus = EventBus::new(id.clone());
        let entry = Arc::new(SessionEntry {
            question: question.clone(),
            bus: Arc::clone(&bus),
            finished: Mutex::new(None),
        });
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id.clone(), Slot::Live(Arc::clone(&entry)));
        let planner = self.engine.planner(bus);
        let trace_dir = self.engine.config().service.trace_dir.clone();
        let session_id = id.clone();
        tokio::spawn(async move {
            let session = match planner.run_session(&question).await {
                Ok(o) => o.session,
                Err(a) => a.session,
            };
            if let Some(dir) = trace_dir {
                let dir = dir.join(&session_id);
                if let Err(e) = crate::trace::write_trace(&dir, &session, &entry.bus.events()) {
                    tracing::warn!("cannot write trace to {}: {e}", dir.display());
                }
            }
            *entry.finished.lock().unwrap_or_else(|e| e.into_inner()) = Some(session);
        });
        Ok(id)
    }
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn ask(State(state): State<Arc<AppState>>, body: Result<Json<AskRequest>, axum::extract::rejection::JsonRejection>) -> Result<Json<AskResponse>, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let session_id = state.start_session(req)?;
    Ok(Json(AskResponse { session_id }))
}

fn resume_point(headers: &HeaderMap) -> Result<u64, ApiError> {
    let value = headers.get(LAST_EVENT_SEQ).or_else(|| headers.get("last-event-id"));
    match value {
        None => Ok(0),
        Some(v) => v
            .to_str()
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| ApiError::BadRequest("Last-Event-Seq must be an integer".into())),
    }
}

async fn events(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let entry = state.entry(&id)?;
    let after = resume_point(&headers)?;
    let frames = entry.bus.subscribe(after).map(|item| {
        let frame = match item {
            Ok(ev) => ev.to_sse(),
            Err(e) => format!("event: error\ndata: {}\n\n", json!({ "error": e.to_string() })),
        };
        Ok::<_, std::convert::Infallible>(frame)
    });
    Ok((
        [
            (header::CONTENT_TYPE, "text/event-stream"),
            (header::CACHE_CONTROL, "no-cache"),
        ],
        Body::from_stream(frames),
    )
        .into_response())
}

#[derive(Serialize)]
struct TraceDocument {
    session_id: String,
    question: String,
    complete: bool,
    session: Option<PlannerSession>,
    events: Vec<AgentEvent>,
}

async fn trace(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<TraceDocument>, ApiError> {
    let entry = state.entry(&id)?;
    let session = entry.finished.lock().unwrap_or_else(|e| e.into_inner()).clone();
    Ok(Json(TraceDocument {
        session_id: id,
        question: entry.question.clone(),
        complete: session.is_some(),
        session,
        events: entry.bus.events(),
    }))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/ask", post(ask))
        .route("/v1/sessions/{id}/events", get(events))
        .route("/v1/sessions/{id}/trace", get(trace))
        .with_state(state)
}

/// Binds `addr` and serves until the process stops.
pub async fn serve(engine: Engine, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(engine))).await
}
