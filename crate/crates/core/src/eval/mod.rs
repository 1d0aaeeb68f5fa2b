//! Closed-set QA evaluation: three agent conditions scored by exact match
//! or an LLM judge, with per-tag accuracy breakdowns.

mod react;
mod score;

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use futures::StreamExt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{ChatMessage, GenParams, LlmBackend};
use crate::engine::Engine;

pub use react::{parse_react_reply, react_agent, ReactOutcome, ReactReply, ReactStep};
pub use score::{exact_match, llm_judge, normalize_answer, JudgeVerdict};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAItem {
    pub id: String,
    pub question: String,
    #[serde(rename = "answers")]
    pub gold_answers: Vec<String>,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset is empty")]
    Empty,
}

/// One `{id, question, answers[], tags[]}` record per line.
pub fn parse_dataset(text: &str) -> Result<Vec<QAItem>, DatasetError> {
    let mut items = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| DatasetError::MalformedRecord { line: idx + 1, reason };
        let item: QAItem = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if item.id.trim().is_empty() {
            return Err(bad("empty id".into()));
        }
        if item.question.trim().is_empty() {
            return Err(bad("empty question".into()));
        }
        if item.gold_answers.is_empty() {
            return Err(bad("no gold answers".into()));
        }
        if !ids.insert(item.id.clone()) {
            return Err(bad(format!("duplicate id `{}`", item.id)));
        }
        items.push(item);
    }
    Ok(items)
}

pub fn load_dataset(path: &Path) -> Result<Vec<QAItem>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    NoSearch,
    React,
    MindSearch,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::NoSearch, AgentKind::React, AgentKind::MindSearch];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::NoSearch => "nosearch",
            AgentKind::React => "react",
            AgentKind::MindSearch => "mindsearch",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }

    /// Row label in the results table.
    pub fn label(self) -> &'static str {
        match self {
            AgentKind::NoSearch => "w/o Search Engine",
            AgentKind::React => "ReAct Search",
            AgentKind::MindSearch => "MindSearch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scoring {
    Em,
    Judge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemResult {
    pub id: String,
    pub agent: AgentKind,
    pub prediction: String,
    pub verdict: bool,
    pub latency_ms: u64,
    pub pages_read: usize,
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub flagged: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub tag: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl Accuracy {
    fn of<'a>(tag: &str, rows: impl Iterator<Item = &'a ItemResult>) -> Self {
        let (mut correct, mut total) = (0, 0);
        for r in rows {
            total += 1;
            correct += r.verdict as usize;
        }
        Self {
            tag: tag.to_string(),
            correct,
            total,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub agent: AgentKind,
    pub scoring: Scoring,
    pub items: Vec<ItemResult>,
    /// One entry per tag in order of first appearance.
    pub per_tag: Vec<Accuracy>,
    pub overall: Accuracy,
}

impl EvalReport {
    pub fn from_items(agent: AgentKind, scoring: Scoring, items: Vec<ItemResult>) -> Self {
        let mut tags: Vec<String> = Vec::new();
        for t in items.iter().flat_map(|i| &i.tags) {
            if !tags.contains(t) {
                tags.push(t.clone());
            }
        }
        let per_tag = tags
            .iter()
            .map(|t| Accuracy::of(t, items.iter().filter(|i| i.tags.contains(t))))
            .collect();
        let overall = Accuracy::of("overall", items.iter());
        Self {
            agent,
            scoring,
            items,
            per_tag,
            overall,
        }
    }

    /// Per-item records followed by one aggregate record.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            out.push_str(&serde_json::to_string(item).unwrap_or_default());
            out.push('\n');
        }
        let aggregate = serde_json::json!({
            "aggregate": {
                "agent": self.agent,
                "scoring": self.scoring,
                "per_tag": self.per_tag,
                "overall": self.overall,
            }
        });
        out.push_str(&aggregate.to_string());
        out.push('\n');
        out
    }
}

/// Accuracy table with one row per report and one column per tag plus Overall.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut tags: Vec<String> = Vec::new();
    for t in reports.iter().flat_map(|r| r.per_tag.iter().map(|a| &a.tag)) {
        if !tags.contains(t) {
            tags.push(t.clone());
        }
    }
    let mut header: Vec<String> = vec!["Agent".into()];
    header.extend(tags.iter().cloned());
    header.push("Overall".into());
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = vec![r.agent.label().to_string()];
            for t in &tags {
                row.push(match r.per_tag.iter().find(|a| &a.tag == t) {
                    Some(a) => format!("{:.1}", a.accuracy * 100.0),
                    None => "-".into(),
                });
            }
            row.push(format!("{:.1}", r.overall.accuracy * 100.0));
            row
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain([header[c].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        let mut s = String::from("|");
        for (i, cell) in cells.iter().enumerate() {
            if i == 0 {
                let _ = write!(s, " {:<w$} |", cell, w = widths[i]);
            } else {
                let _ = write!(s, " {:>w$} |", cell, w = widths[i]);
            }
        }
        s
    };
    let mut out = line(&header);
    out.push('\n');
    out.push('|');
    for (i, w) in widths.iter().enumerate() {
        out.push_str(&"-".repeat(w + 1));
        out.push(if i == 0 { '-' } else { ':' });
        out.push('|');
    }
    out.push('\n');
    for row in &rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

async fn predict(engine: &Engine, agent: AgentKind, item: &QAItem) -> (String, usize, bool, Option<String>, Vec<String>) {
    let llm: &Arc<dyn LlmBackend> = &engine.backends().llm;
    match agent {
        AgentKind::NoSearch => match llm.generate(&[ChatMessage::user(&item.question)], &GenParams::default()).await {
            Ok(c) => (c.text.trim().to_string(), 0, false, None, Vec::new()),
            Err(e) => (String::new(), 0, false, Some(e.to_string()), Vec::new()),
        },
        AgentKind::React => {
            let cfg = &engine.config().eval;
            let out = react_agent(
                &item.question,
                llm.as_ref(),
                &engine.backends().engines,
                engine.templates(),
                cfg.react_max_steps,
                cfg.react_top_k,
            )
            .await;
            (out.prediction, 0, out.flagged, out.error, out.notes)
        }
        AgentKind::MindSearch => {
            let (_, result) = engine.ask(&item.question).await;
            match result {
                Ok(outcome) => {
                    let pages = outcome.session.transcripts.values().map(|t| t.pages.len()).sum();
                    (outcome.answer.answer_text.trim().to_string(), pages, outcome.session.best_effort, None, Vec::new())
                }
                Err(aborted) => {
                    let pages = aborted.session.transcripts.values().map(|t| t.pages.len()).sum();
                    (String::new(), pages, false, Some(aborted.error), Vec::new())
                }
            }
        }
    }
}

/// Runs every item under `agent`, at most `eval.concurrency` at a time, and
/// reports results in dataset order.
pub async fn run_eval(items: &[QAItem], agent: AgentKind, scoring: Scoring, engine: &Engine) -> EvalReport {
    let width = engine.config().eval.concurrency.max(1);
    let results: Vec<ItemResult> = futures::stream::iter(items.iter().map(|item| async move {
        let started = Instant::now();
        let (prediction, pages_read, flagged, error, mut notes) = predict(engine, agent, item).await;
        let verdict = if error.is_some() {
            false
        } else {
            match scoring {
                Scoring::Em => exact_match(&prediction, &item.gold_answers),
                Scoring::Judge => {
                    let v = llm_judge(
                        &item.question,
                        &prediction,
                        &item.gold_answers,
                        engine.backends().llm.as_ref(),
                        engine.templates(),
                    )
                    .await;
                    notes.extend(v.warning);
                    v.correct
                }
            }
        };
        ItemResult {
            id: item.id.clone(),
            agent,
            prediction,
            verdict,
            latency_ms: started.elapsed().as_millis() as u64,
            pages_read,
            tags: item.tags.clone(),
            error,
            flagged,
            notes,
        }
    }))
    .buffered(width)
    .collect()
    .await;
    EvalReport::from_items(agent, scoring, results)
}
