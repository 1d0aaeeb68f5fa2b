use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use super::{ChatMessage, Completion, GenParams, LlmBackend, LlmError, Role};

/// Decides whether a scripted rule fires for a given prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Matcher {
    /// Number of assistant messages already in the prompt.
    Turn(usize),
    /// Substring of the last message.
    Substring(String),
    /// Some message with this role contains the text (empty matches any).
    Role { role: Role, contains: String },
    /// Every inner matcher accepts.
    All(Vec<Matcher>),
}

impl Matcher {
    pub fn accepts(&self, messages: &[ChatMessage]) -> bool {
        match self {
            Matcher::Turn(t) => messages.iter().filter(|m| m.role == Role::Assistant).count() == *t,
            Matcher::Substring(s) => messages.last().is_some_and(|m| m.content.contains(s.as_str())),
            Matcher::Role { role, contains } => messages
                .iter()
                .any(|m| m.role == *role && m.content.contains(contains.as_str())),
            Matcher::All(inner) => inner.iter().all(|m| m.accepts(messages)),
        }
    }

    pub fn role(role: Role, contains: &str) -> Self {
        Matcher::Role {
            role,
            contains: contains.to_string(),
        }
    }

    pub fn substring(s: &str) -> Self {
        Matcher::Substring(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptRule {
    pub matcher: Matcher,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("script line {line}: {reason}")]
pub struct ScriptError {
    pub line: usize,
    pub reason: String,
}

/// An LLM that answers from an ordered rule list. First match wins.
#[derive(Debug, Default)]
pub struct ScriptedLlm {
    rules: Vec<ScriptRule>,
    default: Option<String>,
    latency: Duration,
    calls: AtomicUsize,
}

#[derive(Deserialize)]
struct RuleRecord {
    matcher_kind: String,
    #[serde(default)]
    matcher_value: Value,
    #[serde(default)]
    response: String,
}

fn matcher_from(kind: &str, value: &Value) -> Result<Matcher, String> {
    let text = || -> Result<String, String> {
        match value {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            _ => Err(format!("matcher `{kind}` needs a string value")),
        }
    };
    match kind {
        "turn" => text()?
            .trim()
            .parse()
            .map(Matcher::Turn)
            .map_err(|_| "turn matcher needs an integer".to_string()),
        "substring" => Ok(Matcher::Substring(text()?)),
        "role" => {
            let t = text()?;
            let (role, contains) = t.split_once(':').unwrap_or((t.as_str(), ""));
            let role = Role::parse(role).ok_or_else(|| format!("unknown role `{role}`"))?;
            Ok(Matcher::role(role, contains))
        }
        "all" => {
            let Value::Array(items) = value else {
                return Err("`all` matcher needs an array".into());
            };
            items
                .iter()
                .map(|item| {
                    let kind = item
                        .get("matcher_kind")
                        .and_then(Value::as_str)
                        .ok_or("nested matcher without matcher_kind")?;
                    matcher_from(kind, item.get("matcher_value").unwrap_or(&Value::Null))
                })
                .collect::<Result<_, _>>()
                .map(Matcher::All)
        }
        other => Err(format!("unknown matcher kind `{other}`")),
    }
}

impl ScriptedLlm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rule(mut self, matcher: Matcher, response: impl Into<String>) -> Self {
        self.rules.push(ScriptRule {
            matcher,
            response: response.into(),
        });
        self
    }

    pub fn with_default(mut self, response: impl Into<String>) -> Self {
        self.default = Some(response.into());
        self
    }

    /// Sleeps this long before every reply.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    /// Parses a line-delimited script: one JSON record per line with
    /// `matcher_kind`, `matcher_value`, `response`, plus an optional record of
    /// kind `default`.
    pub fn parse_script(text: &str) -> Result<Self, ScriptError> {
        let mut llm = Self::new();
        for (idx, line) in text.lines().enumerate() {
            let err = |reason: String| ScriptError { line: idx + 1, reason };
            if line.trim().is_empty() {
                continue;
            }
            let rec: RuleRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            if rec.matcher_kind == "default" {
                if llm.default.is_some() {
                    return Err(err("more than one default record".into()));
                }
                llm.default = Some(rec.response);
                continue;
            }
            let matcher = matcher_from(&rec.matcher_kind, &rec.matcher_value).map_err(err)?;
            llm.rules.push(ScriptRule {
                matcher,
                response: rec.response,
            });
        }
        if llm.rules.is_empty() && llm.default.is_none() {
            return Err(ScriptError {
                line: 0,
                reason: "script is empty".into(),
            });
        }
        Ok(llm)
    }

    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScriptError {
            line: 0,
            reason: format!("{}: {e}", path.display()),
        })?;
        Self::parse_script(&text)
    }

    pub fn resolve(&self, messages: &[ChatMessage]) -> Result<&str, LlmError> {
        self.rules
            .iter()
            .find(|r| r.matcher.accepts(messages))
            .map(|r| r.response.as_str())
            .or(self.default.as_deref())
            .ok_or(LlmError::ScriptExhausted)
    }

    /// Total number of generate calls served.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl LlmBackend for ScriptedLlm {
    async fn generate(&self, messages: &[ChatMessage], _params: &GenParams) -> Result<Completion, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if !self.latency.is_zero() {
            tokio::time::sleep(self.latency).await;
        }
        self.resolve(messages).map(Completion::text)
    }

    async fn generate_stream(
        &self,
        messages: &[ChatMessage],
        params: &GenParams,
        on_delta: &mut (dyn for<'s> FnMut(&'s str) + Send),
    ) -> Result<Completion, LlmError> {
        let completion = self.generate(messages, params).await?;
        for chunk in completion.text.split_inclusive(' ') {
            on_delta(chunk);
        }
        Ok(completion)
    }
}
