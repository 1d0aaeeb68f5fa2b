//! The planner loop: an LLM grows the thought graph turn by turn through
//! the action language, searchers answer ready nodes in waves, and a final
//! streamed turn writes the answer into the END node.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::StreamExt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{self, extract_code, ActionKind, Diagnostic};
use crate::backends::{ChatMessage, GenParams, LlmBackend, LlmError, TokenUsage};
use crate::digest::sha256_hex;
use crate::events::{EventBus, EventPayload};
use crate::graph::{
    content_digest, Citation, GraphError, NodeKind, NodeOutcome, NodeResponse, NodeState, ThoughtGraph,
    END_NAME,
};
use crate::searcher::{build_searcher_context, Searcher, SearcherTranscript};
use crate::templates::{self, TemplateSet};

/// Content given to an END node the planner never added itself.
pub const AUTO_END_CONTENT: &str = "Final answer to the user's question";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Planning turns; the final answer turn comes on top.
    pub max_turns: usize,
    /// Search nodes per session.
    pub max_nodes: usize,
    pub max_concurrent_searchers: usize,
    pub searcher_timeout_secs: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            max_turns: 10,
            max_nodes: 32,
            max_concurrent_searchers: 8,
            searcher_timeout_secs: 60.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_turns == 0 {
            return Err("planner.max_turns must be at least 1".into());
        }
        if self.max_nodes == 0 {
            return Err("planner.max_nodes must be at least 1".into());
        }
        if self.max_concurrent_searchers == 0 {
            return Err("planner.max_concurrent_searchers must be at least 1".into());
        }
        if !(self.searcher_timeout_secs > 0.0 && self.searcher_timeout_secs.is_finite()) {
            return Err("planner.searcher_timeout_secs must be positive".into());
        }
        Ok(())
    }

    pub fn searcher_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.searcher_timeout_secs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Finalizing,
    Done,
    Aborted,
}

impl SessionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionStatus::Active => "active",
            SessionStatus::Finalizing => "finalizing",
            SessionStatus::Done => "done",
            SessionStatus::Aborted => "aborted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnKind {
    Plan,
    Final,
}

/// A node result delivered back to the planner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveredResult {
    pub node: String,
    pub answer: Option<String>,
    pub citations: Vec<Citation>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub index: usize,
    pub kind: TurnKind,
    /// Raw model reply; absent when the call failed.
    pub model_output: Option<String>,
    pub code: Option<String>,
    /// Rendered parse diagnostics and apply warnings.
    pub diagnostics: Vec<String>,
    pub results: Vec<DeliveredResult>,
    /// The tool message fed back on the next turn.
    pub feedback: Option<String>,
    pub error: Option<String>,
    pub duration_ms: u64,
    pub usage: Option<TokenUsage>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlannerSession {
    pub session_id: String,
    pub question: String,
    pub graph: ThoughtGraph,
    pub turns: Vec<TurnRecord>,
    pub config: PlannerConfig,
    pub status: SessionStatus,
    /// Finalizing because the turn budget ran out rather than by choice.
    pub best_effort: bool,
    /// Planner LLM calls made, failed ones included.
    pub planner_calls: usize,
    pub consecutive_failures: usize,
    pub transcripts: BTreeMap<String, SearcherTranscript>,
    pub error: Option<String>,
}

impl PlannerSession {
    pub fn final_answer(&self) -> Option<&NodeResponse> {
        let end = self.graph.end_name()?;
        self.graph.node(end)?.response.as_ref()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlannerError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("planner llm call failed: {0}")]
    Llm(#[from] LlmError),
    #[error("turn budget of {0} exhausted")]
    TurnBudgetExhausted(usize),
    #[error("session is {0}, not active")]
    NotActive(&'static str),
}

/// What one planning turn did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurnOutcome {
    pub new_nodes: Vec<String>,
    pub results: Vec<DeliveredResult>,
    pub finalizing: bool,
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub answer: NodeResponse,
    pub session: PlannerSession,
}

#[derive(Debug, Clone, Error)]
#[error("session aborted: {error}")]
pub struct SessionAborted {
    pub error: String,
    pub session: PlannerSession,
}

fn render_results(results: &[DeliveredResult]) -> String {
    let mut out = String::new();
    for r in results {
        match (&r.answer, &r.error) {
            (Some(answer), _) => {
                out.push_str(&format!("[node {}] {}\n", r.node, answer.trim()));
                if !r.citations.is_empty() {
                    out.push_str("Sources:\n");
                    for (i, c) in r.citations.iter().enumerate() {
                        out.push_str(&format!("[{}] {} <{}>\n", i + 1, c.title, c.url));
                    }
                }
            }
            (None, err) => {
                out.push_str(&format!(
                    "[node {}] FAILED: {}\n",
                    r.node,
                    err.as_deref().unwrap_or("unknown error")
                ));
            }
        }
        out.push('\n');
    }
    out.trim_end().to_string()
}

/// The planner prompt after the given turns.
///
/// Only turns with a model reply contribute; when `finalizing` the closing
/// instruction is appended.
pub fn build_planner_prompt(
    templates: &TemplateSet,
    question: &str,
    turns: &[TurnRecord],
    finalizing: bool,
    best_effort: bool,
) -> Vec<ChatMessage> {
    let mut msgs = vec![
        ChatMessage::system(templates.get(templates::PLANNER_SYSTEM)),
        ChatMessage::user(question),
    ];
    for t in turns.iter().filter(|t| t.kind == TurnKind::Plan) {
        let Some(output) = &t.model_output else {
            continue;
        };
        msgs.push(ChatMessage::assistant(output.clone()));
        msgs.push(ChatMessage::tool(t.feedback.clone().unwrap_or_default()));
    }
    if finalizing {
        let note = if best_effort {
            "\n\nThe step budget ran out before the plan was finished. Give the best answer the results above support and say what remains uncertain."
        } else {
            ""
        };
        msgs.push(ChatMessage::user(
            templates.render(templates::PLANNER_FINALIZE, &[("question", question), ("note", note)]),
        ));
    }
    msgs
}

/// Text before the first code fence.
fn thought_of(output: &str) -> String {
    output.split("```").next().unwrap_or_default().trim().to_string()
}

pub struct Planner {
    config: PlannerConfig,
    llm: Arc<dyn LlmBackend>,
    searcher: Searcher,
    templates: Arc<TemplateSet>,
    events: Arc<EventBus>,
    params: GenParams,
}

impl Planner {
    pub fn new(
        config: PlannerConfig,
        llm: Arc<dyn LlmBackend>,
        searcher: Searcher,
        templates: Arc<TemplateSet>,
        events: Arc<EventBus>,
    ) -> Self {
        Self {
            config,
            llm,
            searcher,
            templates,
            events,
            params: GenParams::default(),
        }
    }

    pub fn events(&self) -> &Arc<EventBus> {
        &self.events
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    fn emit(&self, payload: EventPayload) {
        self.events.emit(payload);
    }

    fn warn(&self, message: impl Into<String>) {
        self.emit(EventPayload::Warning { message: message.into() });
    }

    fn emit_node_added(&self, g: &ThoughtGraph, name: &str) {
        if let Some(n) = g.node(name) {
            self.emit(EventPayload::NodeAdded {
                name: n.name.clone(),
                kind: n.kind,
                seq: n.seq,
                content_digest: content_digest(&n.content),
                content: n.content.clone(),
            });
        }
    }

    fn emit_state(&self, name: &str, state: NodeState, error: Option<String>) {
        self.emit(EventPayload::NodeStateChanged {
            name: name.to_string(),
            state,
            error,
        });
    }

    pub fn new_session(&self, question: &str) -> Result<PlannerSession, PlannerError> {
        let graph = ThoughtGraph::new(question)?;
        self.emit(EventPayload::SessionStarted {
            question: question.to_string(),
        });
        self.emit_node_added(&graph, graph.root_name());
        Ok(PlannerSession {
            session_id: self.events.session_id().to_string(),
            question: question.to_string(),
            graph,
            turns: Vec::new(),
            config: self.config.clone(),
            status: SessionStatus::Active,
            best_effort: false,
            planner_calls: 0,
            consecutive_failures: 0,
            transcripts: BTreeMap::new(),
            error: None,
        })
    }

    pub fn build_prompt(&self, session: &PlannerSession) -> Vec<ChatMessage> {
        build_planner_prompt(
            &self.templates,
            &session.question,
            &session.turns,
            session.status == SessionStatus::Finalizing,
            session.best_effort,
        )
    }

    fn enter_best_effort(&self, session: &mut PlannerSession) {
        session.best_effort = true;
        session.status = SessionStatus::Finalizing;
        self.warn(format!(
            "turn budget of {} exhausted; writing a best-effort answer",
            self.config.max_turns
        ));
    }

    /// One planning turn: ask the model, apply its code, run every node that
    /// becomes ready, and record the feedback for the next turn.
    pub async fn run_turn(&self, session: &mut PlannerSession) -> Result<TurnOutcome, PlannerError> {
        if session.status != SessionStatus::Active {
            return Err(PlannerError::NotActive(session.status.as_str()));
        }
        if session.planner_calls >= self.config.max_turns {
            self.enter_best_effort(session);
            return Err(PlannerError::TurnBudgetExhausted(self.config.max_turns));
        }
        let index = session.turns.len();
        let prompt = self.build_prompt(session);
        let started = Instant::now();
        session.planner_calls += 1;
        let completion = match self.llm.generate(&prompt, &self.params).await {
            Ok(c) => c,
            Err(e) => {
                session.consecutive_failures += 1;
                session.turns.push(TurnRecord {
                    index,
                    kind: TurnKind::Plan,
                    model_output: None,
                    code: None,
                    diagnostics: Vec::new(),
                    results: Vec::new(),
                    feedback: None,
                    error: Some(e.to_string()),
                    duration_ms: started.elapsed().as_millis() as u64,
                    usage: None,
                });
                self.emit(EventPayload::Error {
                    message: format!("planner turn {index}: {e}"),
                });
                if session.consecutive_failures >= 2 {
                    session.status = SessionStatus::Aborted;
                    session.error = Some(e.to_string());
                }
                return Err(PlannerError::Llm(e));
            }
        };
        session.consecutive_failures = 0;
        let output = completion.text;
        self.emit(EventPayload::PlannerThought {
            turn: index,
            text: thought_of(&output),
        });

        let mut notes: Vec<String> = Vec::new();
        let mut diagnostics: Vec<String> = Vec::new();
        let mut new_nodes = Vec::new();
        let code = extract_code(&output);
        let had_end = session.graph.end_name().is_some();
        match &code {
            None => notes.push(
                "No code block found in your reply. Add nodes and edges in a ```python block, or add the \"response\" node once the answers are sufficient."
                    .into(),
            ),
            Some(code) => {
                let parsed = action::parse(code);
                let rendered: Vec<String> = parsed.diagnostics.iter().map(|d| d.render(code)).collect();
                self.emit(EventPayload::CodeParsed {
                    turn: index,
                    actions: parsed.actions.len(),
                    diagnostics: rendered.clone(),
                });
                if parsed.has_errors() {
                    notes.push(format!(
                        "Your code was rejected and nothing was applied:\n{}\nFix the errors and send the corrected block.",
                        rendered.join("\n")
                    ));
                    diagnostics = rendered;
                } else {
                    diagnostics = rendered;
                    let applied = action::apply_actions_limited(&mut session.graph, &parsed.actions, self.config.max_nodes);
                    for a in &applied.applied {
                        match &a.kind {
                            ActionKind::AddNode { name, .. } => {
                                self.emit_node_added(&session.graph, name);
                                new_nodes.push(name.clone());
                            }
                            ActionKind::AddEdge { from, to } => self.emit(EventPayload::EdgeAdded {
                                from: from.clone(),
                                to: to.clone(),
                            }),
                        }
                    }
                    let warnings: Vec<String> = applied.warnings.iter().map(|w: &Diagnostic| w.render(code)).collect();
                    for w in &warnings {
                        self.warn(w.clone());
                    }
                    if let Some(err) = &applied.aborted {
                        let msg = format!("{err}; the remaining actions were not applied");
                        self.warn(msg.clone());
                        notes.push(format!("error: {msg}"));
                    }
                    if !warnings.is_empty() {
                        notes.push(format!("Some actions were skipped:\n{}", warnings.join("\n")));
                    }
                    diagnostics.extend(warnings);
                }
            }
        }

        if !had_end && session.graph.end_name().is_some() {
            let loose = session.graph.leaves_not_connected_to_end();
            if !loose.is_empty() {
                self.warn(format!("nodes not connected to `{END_NAME}`: {}", loose.join(", ")));
            }
        }

        let mut results = self.run_waves(session).await;
        results.sort_by_key(|r| session.graph.node(&r.node).map(|n| n.seq).unwrap_or(u64::MAX));

        if !results.is_empty() {
            notes.push(render_results(&results));
        }
        if notes.is_empty() {
            notes.push("Code executed. No new results.".into());
        }

        let finalizing = session
            .graph
            .end_name()
            .is_some_and(|end| session.graph.ready_nodes().iter().any(|n| n == end));
        if finalizing {
            session.status = SessionStatus::Finalizing;
        }

        session.turns.push(TurnRecord {
            index,
            kind: TurnKind::Plan,
            model_output: Some(output),
            code,
            diagnostics,
            results: results.clone(),
            feedback: Some(notes.join("\n\n")),
            error: None,
            duration_ms: started.elapsed().as_millis() as u64,
            usage: completion.usage,
        });
        Ok(TurnOutcome {
            new_nodes,
            results,
            finalizing,
        })
    }

    /// Dispatches ready Search nodes until none remain, at most
    /// `max_concurrent_searchers` at a time, recording results in dispatch order.
    pub async fn run_waves(&self, session: &mut PlannerSession) -> Vec<DeliveredResult> {
        let mut delivered = Vec::new();
        let timeout = self.config.searcher_timeout();
        loop {
            let ready: Vec<String> = session
                .graph
                .ready_nodes()
                .into_iter()
                .filter(|n| session.graph.node(n).is_some_and(|n| n.kind == NodeKind::Search))
                .collect();
            if ready.is_empty() {
                break;
            }
            let mut jobs = Vec::with_capacity(ready.len());
            for name in ready {
                let ctx = match build_searcher_context(&session.graph, &name) {
                    Ok(ctx) => ctx,
                    Err(e) => {
                        self.warn(format!("cannot build context for `{name}`: {e}"));
                        continue;
                    }
                };
                if session.graph.mark_running(&name).is_ok() {
                    self.emit_state(&name, NodeState::Running, None);
                    jobs.push((name, ctx));
                }
            }
            if jobs.is_empty() {
                break;
            }
            let runs = futures::stream::iter(jobs.into_iter().map(|(name, ctx)| {
                let searcher = self.searcher.clone();
                let task_name = name.clone();
                async move {
                    let handle =
                        tokio::spawn(async move { searcher.run_with_timeout(&task_name, &ctx, Some(timeout)).await });
                    (name, handle.await)
                }
            }))
            .buffered(self.config.max_concurrent_searchers);
            futures::pin_mut!(runs);
            while let Some((name, joined)) = runs.next().await {
                let (outcome, transcript) = match joined {
                    Ok(run) => (run.result.map_err(|e| e.to_string()), Some(run.transcript)),
                    Err(e) => (Err(format!("searcher task failed: {e}")), None),
                };
                if let Some(t) = transcript {
                    session.transcripts.insert(name.clone(), t);
                }
                match outcome {
                    Ok(resp) => {
                        self.emit(EventPayload::NodeResponse {
                            name: name.clone(),
                            answer: resp.answer_text.clone(),
                            citations: resp.citations.clone(),
                            transcript_digest: resp.transcript_digest.clone(),
                        });
                        delivered.push(DeliveredResult {
                            node: name.clone(),
                            answer: Some(resp.answer_text.clone()),
                            citations: resp.citations.clone(),
                            error: None,
                        });
                        if session.graph.record_result(&name, NodeOutcome::Answered(resp)).is_ok() {
                            self.emit_state(&name, NodeState::Done, None);
                        }
                    }
                    Err(err) => {
                        delivered.push(DeliveredResult {
                            node: name.clone(),
                            answer: None,
                            citations: Vec::new(),
                            error: Some(err.clone()),
                        });
                        if session.graph.record_result(&name, NodeOutcome::Failed(err.clone())).is_ok() {
                            self.emit_state(&name, NodeState::Failed, Some(err));
                        }
                    }
                }
            }
        }
        delivered
    }

    /// Citations of every answered Search node, first occurrence of each URL
    /// kept, in node order.
    fn collected_citations(g: &ThoughtGraph) -> Vec<Citation> {
        let mut seen = HashSet::new();
        g.nodes()
            .filter(|n| n.kind == NodeKind::Search)
            .filter_map(|n| n.response.as_ref())
            .flat_map(|r| r.citations.iter())
            .filter(|c| seen.insert(c.url.clone()))
            .cloned()
            .collect()
    }

    /// The final turn. Streams the answer and stores it on the END node,
    /// adding that node first if the planner never did.
    pub async fn finalize(&self, session: &mut PlannerSession) -> Result<NodeResponse, PlannerError> {
        if session.status != SessionStatus::Finalizing {
            return Err(PlannerError::NotActive(session.status.as_str()));
        }
        if session.graph.end_name().is_none() {
            session.graph.add_node(END_NAME, AUTO_END_CONTENT)?;
            self.emit_node_added(&session.graph, END_NAME);
            self.warn(format!("`{END_NAME}` node added automatically"));
        }
        let end = END_NAME.to_string();
        session.graph.mark_running(&end)?;
        self.emit_state(&end, NodeState::Running, None);

        let prompt = self.build_prompt(session);
        let mut last_err = None;
        let mut attempts = 0;
        while attempts < 2 && session.planner_calls < self.config.max_turns + 1 {
            attempts += 1;
            session.planner_calls += 1;
            let index = session.turns.len();
            let started = Instant::now();
            let events = Arc::clone(&self.events);
            let mut on_delta = |d: &str| {
                if !d.is_empty() {
                    events.emit(EventPayload::FinalAnswerDelta { text: d.to_string() });
                }
            };
            match self.llm.generate_stream(&prompt, &self.params, &mut on_delta).await {
                Ok(completion) => {
                    let answer = completion.text;
                    let citations = Self::collected_citations(&session.graph);
                    let transcript = serde_json::json!({ "prompt": &prompt, "answer": &answer });
                    let resp = NodeResponse {
                        answer_text: answer.clone(),
                        citations: citations.clone(),
                        transcript_digest: sha256_hex(transcript.to_string().as_bytes()),
                    };
                    session.turns.push(TurnRecord {
                        index,
                        kind: TurnKind::Final,
                        model_output: Some(answer.clone()),
                        code: None,
                        diagnostics: Vec::new(),
                        results: Vec::new(),
                        feedback: None,
                        error: None,
                        duration_ms: started.elapsed().as_millis() as u64,
                        usage: completion.usage,
                    });
                    self.emit(EventPayload::FinalAnswerDone {
                        answer,
                        citations,
                        transcript_digest: resp.transcript_digest.clone(),
                    });
                    session.graph.record_result(&end, NodeOutcome::Answered(resp.clone()))?;
                    self.emit_state(&end, NodeState::Done, None);
                    session.status = SessionStatus::Done;
                    return Ok(resp);
                }
                Err(e) => {
                    session.turns.push(TurnRecord {
                        index,
                        kind: TurnKind::Final,
                        model_output: None,
                        code: None,
                        diagnostics: Vec::new(),
                        results: Vec::new(),
                        feedback: None,
                        error: Some(e.to_string()),
                        duration_ms: started.elapsed().as_millis() as u64,
                        usage: None,
                    });
                    self.emit(EventPayload::Error {
                        message: format!("final answer: {e}"),
                    });
                    last_err = Some(e);
                }
            }
        }
        let err = last_err.unwrap_or_else(|| LlmError::backend(None, "no planner calls left for the final answer"));
        let _ = session.graph.record_result(&end, NodeOutcome::Failed(err.to_string()));
        self.emit_state(&end, NodeState::Failed, Some(err.to_string()));
        session.status = SessionStatus::Aborted;
        session.error = Some(err.to_string());
        Err(PlannerError::Llm(err))
    }

    /// Drives a session to completion. Emits `session_done` last and closes
    /// the event bus.
    pub async fn run_session(&self, question: &str) -> Result<SessionOutcome, SessionAborted> {
        let mut session = match self.new_session(question) {
            Ok(s) => s,
            Err(e) => {
                self.emit(EventPayload::Error { message: e.to_string() });
                self.emit(EventPayload::SessionDone {
                    status: SessionStatus::Aborted.as_str().into(),
                });
                self.events.close();
                let graph = ThoughtGraph::new("?").expect("placeholder question is valid");
                return Err(SessionAborted {
                    error: e.to_string(),
                    session: PlannerSession {
                        session_id: self.events.session_id().to_string(),
                        question: question.to_string(),
                        graph,
                        turns: Vec::new(),
                        config: self.config.clone(),
                        status: SessionStatus::Aborted,
                        best_effort: false,
                        planner_calls: 0,
                        consecutive_failures: 0,
                        transcripts: BTreeMap::new(),
                        error: Some(e.to_string()),
                    },
                });
            }
        };
        self.drive(&mut session).await;
        self.emit(EventPayload::SessionDone {
            status: session.status.as_str().into(),
        });
        self.events.close();
        match (session.status, session.final_answer().cloned()) {
            (SessionStatus::Done, Some(answer)) => Ok(SessionOutcome { answer, session }),
            _ => Err(SessionAborted {
                error: session.error.clone().unwrap_or_else(|| "session did not finish".into()),
                session,
            }),
        }
    }

    async fn drive(&self, session: &mut PlannerSession) {
        loop {
            match session.status {
                SessionStatus::Active => {
                    if session.planner_calls >= self.config.max_turns {
                        self.enter_best_effort(session);
                        continue;
                    }
                    let _ = self.run_turn(session).await;
                }
                SessionStatus::Finalizing => {
                    let _ = self.finalize(session).await;
                }
                SessionStatus::Done | SessionStatus::Aborted => return,
            }
        }
    }
}
