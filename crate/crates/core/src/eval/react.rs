use std::sync::{Arc, LazyLock};

use futures::future::join_all;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backends::{ChatMessage, GenParams, LlmBackend, SearchBackend};
use crate::searcher::merge_hits;
use crate::templates::{self, TemplateSet};

static THOUGHT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\s*Thought:\s*(.*)$").unwrap());
static FINAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?ms)^\s*Final Answer:\s*(.*)\z").unwrap());
static ACTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?m)^\s*Action:\s*search\(\s*(?:"((?:[^"\\]|\\.)*)"|'([^']*)')\s*\)\s*$"#).unwrap()
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReactReply {
    Search { thought: String, query: String },
    Final { thought: String, answer: String },
    Invalid { thought: String },
}

impl ReactReply {
    pub fn thought(&self) -> &str {
        match self {
            ReactReply::Search { thought, .. } | ReactReply::Final { thought, .. } | ReactReply::Invalid { thought } => {
                thought
            }
        }
    }
}

/// Splits one model reply into its thought and the action that follows.
pub fn parse_react_reply(text: &str) -> ReactReply {
    let thought = THOUGHT
        .captures(text)
        .map(|c| c[1].trim().to_string())
        .unwrap_or_else(|| text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("").to_string());
    let action = ACTION.captures(text);
    let fin = FINAL.captures(text);
    let action_at = action.as_ref().map(|c| c.get(0).unwrap().start());
    let final_at = fin.as_ref().map(|c| c.get(0).unwrap().start());
    match (action, fin) {
        (Some(a), _) if final_at.is_none_or(|f| action_at.unwrap() < f) => {
            let query = a
                .get(1)
                .map(|m| m.as_str().replace("\\\"", "\"").replace("\\\\", "\\"))
                .or_else(|| a.get(2).map(|m| m.as_str().to_string()))
                .unwrap_or_default();
            ReactReply::Search {
                thought,
                query: query.trim().to_string(),
            }
        }
        (_, Some(f)) => ReactReply::Final {
            thought,
            answer: f[1].trim().to_string(),
        },
        _ => ReactReply::Invalid { thought },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReactStep {
    pub reply: String,
    pub observation: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReactOutcome {
    pub prediction: String,
    /// Set when the step budget ran out before a final answer.
    pub flagged: bool,
    pub steps: Vec<ReactStep>,
    pub searches: usize,
    pub error: Option<String>,
    pub notes: Vec<String>,
}

pub const INVALID_ACTION_OBSERVATION: &str =
    "Observation: invalid action. Reply with Action: search(\"query\") or Final Answer: <answer>.";

async fn observe(query: &str, engines: &[Arc<dyn SearchBackend>], top_k: usize) -> String {
    if query.is_empty() {
        return "Observation: empty search query.".into();
    }
    let results = join_all(engines.iter().map(|e| e.search(query, top_k))).await;
    let mut lists = Vec::new();
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(hits) => lists.push(hits),
            Err(e) => errors.push(e.to_string()),
        }
    }
    if lists.is_empty() {
        return format!("Observation: search failed: {}", errors.join("; "));
    }
    let hits = merge_hits(&lists, top_k);
    if hits.is_empty() {
        return "Observation: no results.".into();
    }
    let mut out = String::from("Observation:");
    for (i, h) in hits.iter().enumerate() {
        out.push_str(&format!("\n[{}] {} ({})\n{}", i + 1, h.title, h.url, h.summary));
    }
    out
}

/// Single-agent thought/action/observation loop with a search tool.
pub async fn react_agent(
    question: &str,
    llm: &dyn LlmBackend,
    engines: &[Arc<dyn SearchBackend>],
    templates: &TemplateSet,
    max_steps: usize,
    top_k: usize,
) -> ReactOutcome {
    let mut messages = vec![
        ChatMessage::system(templates.get(templates::REACT_SYSTEM)),
        ChatMessage::user(question),
    ];
    let mut out = ReactOutcome::default();
    let mut last_thought = String::new();
    for _ in 0..max_steps.max(1) {
        let reply = match llm.generate(&messages, &GenParams::default()).await {
            Ok(c) => c.text,
            Err(e) => {
                out.error = Some(e.to_string());
                out.notes.push(format!("llm error: {e}"));
                return out;
            }
        };
        let parsed = parse_react_reply(&reply);
        last_thought = parsed.thought().to_string();
        let observation = match &parsed {
            ReactReply::Final { answer, .. } => {
                out.prediction = answer.clone();
                out.steps.push(ReactStep { reply, observation: None });
                return out;
            }
            ReactReply::Search { query, .. } => {
                out.searches += 1;
                observe(query, engines, top_k).await
            }
            ReactReply::Invalid { .. } => INVALID_ACTION_OBSERVATION.to_string(),
        };
        messages.push(ChatMessage::assistant(reply.clone()));
        messages.push(ChatMessage::user(observation.clone()));
        out.steps.push(ReactStep {
            reply,
            observation: Some(observation),
        });
    }
    out.prediction = last_thought;
    out.flagged = true;
    out.notes.push(format!("step budget of {max_steps} exhausted without a final answer"));
    out
}
