//! Seams to the outside world: a chat model, search engines, and a page
//! fetcher. Each seam has a deterministic fixture implementation and a live
//! HTTP adapter; the rest of the engine only sees the traits.

mod fixture;
mod live;
mod scripted;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::searcher::SearchHit;

pub use fixture::{tokenize, CorpusError, FixtureCorpus, FixtureDoc, FixtureFetcher, FixtureSearch};
pub use live::{
    parse_bing_response, LiveChat, LiveChatConfig, LiveFetcher, LiveSearch, DEFAULT_MAX_FETCH_BYTES,
};
pub use scripted::{Matcher, ScriptError, ScriptRule, ScriptedLlm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "system" => Some(Role::System),
            "user" => Some(Role::User),
            "assistant" => Some(Role::Assistant),
            "tool" => Some(Role::Tool),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }

    pub fn tool(content: impl Into<String>) -> Self {
        Self::new(Role::Tool, content)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub temperature: f32,
    pub max_tokens: Option<u32>,
    pub stop: Vec<String>,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: None,
            stop: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: Option<TokenUsage>,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            usage: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("llm backend error (status {status:?}): {message}")]
    Backend { status: Option<u16>, message: String },
    #[error("script has no matching rule and no default")]
    ScriptExhausted,
}

impl LlmError {
    pub fn backend(status: Option<u16>, message: impl Into<String>) -> Self {
        LlmError::Backend {
            status,
            message: message.into(),
        }
    }
}

#[async_trait]
pub trait LlmBackend: Send + Sync {
    async fn generate(&self, messages: &[ChatMessage], params: &GenParams) -> Result<Completion, LlmError>;

    /// Streams the completion through `on_delta`. The deltas concatenate to
    /// the returned text.
    async fn generate_stream(
        &self,
        messages: &[ChatMessage],
        params: &GenParams,
        on_delta: &mut (dyn for<'s> FnMut(&'s str) + Send),
    ) -> Result<Completion, LlmError> {
        let completion = self.generate(messages, params).await?;
        on_delta(&completion.text);
        Ok(completion)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("search backend error (status {status:?}): {message}")]
    Backend { status: Option<u16>, message: String },
    #[error("search timed out")]
    Timeout,
}

#[async_trait]
pub trait SearchBackend: Send + Sync {
    /// Engine identifier stamped onto hits.
    fn id(&self) -> &str;

    /// At most `k` hits, ranked from 1.
    async fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, SearchError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPage {
    pub url: String,
    pub content_type: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FetchError {
    #[error("page not found: {0}")]
    NotFound(String),
    #[error("fetch failed (status {status:?}): {message}")]
    Http { status: Option<u16>, message: String },
    #[error("fetch timed out")]
    Timeout,
}

#[async_trait]
pub trait PageFetcher: Send + Sync {
    async fn fetch(&self, url: &str) -> Result<RawPage, FetchError>;
}

/// The three seams bundled together.
#[derive(Clone)]
pub struct Backends {
    pub llm: std::sync::Arc<dyn LlmBackend>,
    pub engines: Vec<std::sync::Arc<dyn SearchBackend>>,
    pub fetcher: std::sync::Arc<dyn PageFetcher>,
}
