//! Session telemetry: the ordered [`AgentEvent`] stream consumed by the
//! service, the CLI and trace tooling.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use futures::Stream;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::watch;

use crate::graph::{Citation, GraphError, NodeKind, NodeOutcome, NodeResponse, NodeState, ThoughtGraph};

/// Events retained per session before the stream reports overflow.
pub const DEFAULT_EVENT_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventPayload {
    SessionStarted {
        question: String,
    },
    PlannerThought {
        turn: usize,
        text: String,
    },
    CodeParsed {
        turn: usize,
        actions: usize,
        diagnostics: Vec<String>,
    },
    NodeAdded {
        name: String,
        kind: NodeKind,
        seq: u64,
        content_digest: String,
        content: String,
    },
    EdgeAdded {
        from: String,
        to: String,
    },
    NodeStateChanged {
        name: String,
        state: NodeState,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    NodeResponse {
        name: String,
        answer: String,
        citations: Vec<Citation>,
        transcript_digest: String,
    },
    FinalAnswerDelta {
        text: String,
    },
    FinalAnswerDone {
        answer: String,
        citations: Vec<Citation>,
        transcript_digest: String,
    },
    Warning {
        message: String,
    },
    Error {
        message: String,
    },
    SessionDone {
        status: String,
    },
}

impl EventPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            EventPayload::SessionStarted { .. } => "session_started",
            EventPayload::PlannerThought { .. } => "planner_thought",
            EventPayload::CodeParsed { .. } => "code_parsed",
            EventPayload::NodeAdded { .. } => "node_added",
            EventPayload::EdgeAdded { .. } => "edge_added",
            EventPayload::NodeStateChanged { .. } => "node_state_changed",
            EventPayload::NodeResponse { .. } => "node_response",
            EventPayload::FinalAnswerDelta { .. } => "final_answer_delta",
            EventPayload::FinalAnswerDone { .. } => "final_answer_done",
            EventPayload::Warning { .. } => "warning",
            EventPayload::Error { .. } => "error",
            EventPayload::SessionDone { .. } => "session_done",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentEvent {
    pub seq: u64,
    pub session_id: String,
    #[serde(flatten)]
    pub payload: EventPayload,
    pub timestamp_ms: u64,
}

impl AgentEvent {
    pub fn kind(&self) -> &'static str {
        self.payload.kind()
    }

    /// `id: <seq>` / `event: <kind>` / `data: <json>` followed by a blank line.
    pub fn to_sse(&self) -> String {
        format!(
            "id: {}\nevent: {}\ndata: {}\n\n",
            self.seq,
            self.kind(),
            serde_json::to_string(self).unwrap_or_default()
        )
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StreamError {
    #[error("event buffer overflowed after {0} events")]
    Overflow(usize),
}

#[derive(Debug, Default)]
struct BusInner {
    events: Vec<AgentEvent>,
    next_seq: u64,
    overflowed: bool,
    closed: bool,
}

/// Per-session append-only event log with live subscribers.
///
/// Emitting never blocks: subscribers read from the shared log at their own
/// pace. Past the cap, events are dropped and readers get an overflow error.
#[derive(Debug)]
pub struct EventBus {
    session_id: String,
    cap: usize,
    inner: Mutex<BusInner>,
    tick: watch::Sender<u64>,
}

impl EventBus {
    pub fn new(session_id: impl Into<String>) -> Arc<Self> {
        Self::with_cap(session_id, DEFAULT_EVENT_CAP)
    }

    pub fn with_cap(session_id: impl Into<String>, cap: usize) -> Arc<Self> {
        Arc::new(Self {
            session_id: session_id.into(),
            cap,
            inner: Mutex::new(BusInner {
                next_seq: 1,
                ..Default::default()
            }),
            tick: watch::channel(0).0,
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, BusInner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Appends an event and returns its seq.
    pub fn emit(&self, payload: EventPayload) -> u64 {
        let seq = {
            let mut inner = self.lock();
            let seq = inner.next_seq;
            inner.next_seq += 1;
            if inner.events.len() >= self.cap {
                inner.overflowed = true;
            } else {
                inner.events.push(AgentEvent {
                    seq,
                    session_id: self.session_id.clone(),
                    payload,
                    timestamp_ms: now_ms(),
                });
            }
            seq
        };
        self.tick.send_replace(seq);
        seq
    }

    /// Marks the log complete; subscribers end after draining it.
    pub fn close(&self) {
        self.lock().closed = true;
        self.tick.send_modify(|_| {});
    }

    pub fn is_closed(&self) -> bool {
        self.lock().closed
    }

    pub fn overflowed(&self) -> bool {
        self.lock().overflowed
    }

    pub fn events(&self) -> Vec<AgentEvent> {
        self.lock().events.clone()
    }

    /// Events with seq greater than `after_seq`, then live ones until close.
    pub fn subscribe(self: &Arc<Self>, after_seq: u64) -> impl Stream<Item = Result<AgentEvent, StreamError>> + Send + 'static {
        let rx = self.tick.subscribe();
        let state = (Arc::clone(self), after_seq as usize, rx, false);
        futures::stream::unfold(state, |(bus, cursor, mut rx, done)| async move {
            if done {
                return None;
            }
            loop {
                rx.borrow_and_update();
                {
                    let inner = bus.lock();
                    if let Some(ev) = inner.events.get(cursor) {
                        let ev = ev.clone();
                        drop(inner);
                        return Some((Ok(ev), (bus, cursor + 1, rx, false)));
                    }
                    if inner.overflowed {
                        let n = inner.events.len();
                        drop(inner);
                        return Some((Err(StreamError::Overflow(n)), (bus, cursor, rx, true)));
                    }
                    if inner.closed {
                        return None;
                    }
                }
                if rx.changed().await.is_err() {
                    return None;
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("event log has no session_started event")]
    NoSession,
    #[error("event {seq}: {source}")]
    Graph {
        seq: u64,
        #[source]
        source: GraphError,
    },
    #[error("event {seq}: node `{name}` finished without a response event")]
    MissingResponse { seq: u64, name: String },
}

/// Rebuilds the thought graph from a session's events alone.
pub fn replay_graph(events: &[AgentEvent]) -> Result<ThoughtGraph, ReplayError> {
    let mut graph: Option<ThoughtGraph> = None;
    let mut responses: HashMap<String, NodeResponse> = HashMap::new();
    for ev in events {
        let seq = ev.seq;
        let wrap = |source| ReplayError::Graph { seq, source };
        match &ev.payload {
            EventPayload::SessionStarted { question } => {
                graph = Some(ThoughtGraph::new(question).map_err(wrap)?);
            }
            payload => {
                let Some(g) = graph.as_mut() else {
                    continue;
                };
                match payload {
                    EventPayload::NodeAdded { name, kind, content, .. } if *kind != NodeKind::Start => {
                        g.add_node(name, content).map_err(wrap)?;
                    }
                    EventPayload::EdgeAdded { from, to } => {
                        g.add_edge(from, to).map_err(wrap)?;
                    }
                    EventPayload::NodeResponse {
                        name,
                        answer,
                        citations,
                        transcript_digest,
                    } => {
                        responses.insert(
                            name.clone(),
                            NodeResponse {
                                answer_text: answer.clone(),
                                citations: citations.clone(),
                                transcript_digest: transcript_digest.clone(),
                            },
                        );
                    }
                    EventPayload::FinalAnswerDone {
                        answer,
                        citations,
                        transcript_digest,
                    } => {
                        if let Some(end) = g.end_name().map(str::to_string) {
                            responses.insert(
                                end,
                                NodeResponse {
                                    answer_text: answer.clone(),
                                    citations: citations.clone(),
                                    transcript_digest: transcript_digest.clone(),
                                },
                            );
                        }
                    }
                    EventPayload::NodeStateChanged { name, state, error } => match state {
                        NodeState::Running => g.mark_running(name).map_err(wrap)?,
                        NodeState::Done => {
                            let resp = responses.remove(name).ok_or_else(|| ReplayError::MissingResponse {
                                seq,
                                name: name.clone(),
                            })?;
                            g.record_result(name, NodeOutcome::Answered(resp)).map_err(wrap)?;
                        }
                        NodeState::Failed => {
                            let err = error.clone().unwrap_or_default();
                            g.record_result(name, NodeOutcome::Failed(err)).map_err(wrap)?;
                        }
                        NodeState::Pending => {}
                    },
                    _ => {}
                }
            }
        }
    }
    graph.ok_or(ReplayError::NoSession)
}
