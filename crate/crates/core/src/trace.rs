//! Session traces on disk: one directory per session holding
//! `session.json`, `events.jsonl`, `snapshot.txt` and one
//! `transcripts/<node>.json` per searcher run.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::events::{AgentEvent, EventPayload};
use crate::planner::PlannerSession;

pub const SESSION_FILE: &str = "session.json";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.txt";
pub const TRANSCRIPTS_DIR: &str = "transcripts";

fn to_io(e: serde_json::Error) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e)
}

pub fn write_trace(dir: &Path, session: &PlannerSession, events: &[AgentEvent]) -> io::Result<()> {
    fs::create_dir_all(dir.join(TRANSCRIPTS_DIR))?;
    fs::write(
        dir.join(SESSION_FILE),
        serde_json::to_string_pretty(session).map_err(to_io)?,
    )?;
    let mut lines = String::new();
    for ev in events {
        lines.push_str(&serde_json::to_string(ev).map_err(to_io)?);
        lines.push('\n');
    }
    fs::write(dir.join(EVENTS_FILE), lines)?;
    fs::write(dir.join(SNAPSHOT_FILE), session.graph.snapshot().render())?;
    for (node, transcript) in &session.transcripts {
        fs::write(
            dir.join(TRANSCRIPTS_DIR).join(format!("{node}.json")),
            serde_json::to_string_pretty(transcript).map_err(to_io)?,
        )?;
    }
    Ok(())
}

/// Accepts a trace directory or an events file directly.
pub fn events_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(EVENTS_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn read_events(path: &Path) -> io::Result<Vec<AgentEvent>> {
    let text = fs::read_to_string(events_path(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn read_session(dir: &Path) -> io::Result<PlannerSession> {
    let text = fs::read_to_string(dir.join(SESSION_FILE))?;
    serde_json::from_str(&text).map_err(to_io)
}

/// One human-readable line per event.
pub fn render_event(ev: &AgentEvent) -> String {
    let body = match &ev.payload {
        EventPayload::SessionStarted { question } => format!("question: {question}"),
        EventPayload::PlannerThought { turn, text } => format!("turn {turn}: {}", text.replace('\n', " ")),
        EventPayload::CodeParsed {
            turn,
            actions,
            diagnostics,
        } => format!("turn {turn}: {actions} action(s), {} diagnostic(s)", diagnostics.len()),
        EventPayload::NodeAdded { name, kind, content, .. } => format!("{name} ({}) {content}", kind.as_str()),
        EventPayload::EdgeAdded { from, to } => format!("{from} -> {to}"),
        EventPayload::NodeStateChanged { name, state, error } => match error {
            Some(e) => format!("{name} {state}: {e}"),
            None => format!("{name} {state}"),
        },
        EventPayload::NodeResponse { name, answer, .. } => format!("{name}: {}", answer.replace('\n', " ")),
        EventPayload::FinalAnswerDelta { text } => format!("{text:?}"),
        EventPayload::FinalAnswerDone { answer, citations, .. } => {
            format!("{} ({} citation(s))", answer.replace('\n', " "), citations.len())
        }
        EventPayload::Warning { message } | EventPayload::Error { message } => message.clone(),
        EventPayload::SessionDone { status } => status.clone(),
    };
    format!("#{:<4} {:<18} {}", ev.seq, ev.kind(), body)
}
