use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use async_trait::async_trait;
use futures::StreamExt;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    ChatMessage, Completion, FetchError, GenParams, LlmBackend, LlmError, PageFetcher, RawPage, Role,
    SearchBackend, SearchError, TokenUsage,
};
use crate::searcher::{normalize_url, SearchHit};

pub const DEFAULT_MAX_FETCH_BYTES: usize = 2 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct LiveChatConfig {
    pub endpoint: String,
    pub api_key: String,
    pub model: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub stream: bool,
}

impl LiveChatConfig {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            model: model.into(),
            timeout: Duration::from_secs(120),
            max_retries: 2,
            backoff_base: Duration::from_millis(500),
            stream: true,
        }
    }
}

/// Chat-completions client (`{model, messages: [{role, content}]}` shape).
pub struct LiveChat {
    config: LiveChatConfig,
    client: reqwest::Client,
    retries: AtomicUsize,
}

fn is_retryable(status: u16) -> bool {
    status == 429 || status >= 500
}

fn wire_role(role: Role) -> &'static str {
    // Tool results travel as user turns; no tool-call ids are involved.
    match role {
        Role::Tool => "user",
        other => other.as_str(),
    }
}

enum Attempt {
    Done(Completion),
    Retry(LlmError),
    Fail(LlmError),
}

impl LiveChat {
    pub fn new(config: LiveChatConfig) -> Result<Self, LlmError> {
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::backend(None, e.to_string()))?;
        Ok(Self {
            config,
            client,
            retries: AtomicUsize::new(0),
        })
    }

    /// Retries performed over the client's lifetime.
    pub fn retry_count(&self) -> usize {
        self.retries.load(Ordering::SeqCst)
    }

    fn body(&self, messages: &[ChatMessage], params: &GenParams, stream: bool) -> Value {
        let msgs: Vec<Value> = messages
            .iter()
            .map(|m| json!({"role": wire_role(m.role), "content": m.content}))
            .collect();
        let mut body = json!({
            "model": self.config.model,
            "messages": msgs,
            "temperature": params.temperature,
            "stream": stream,
        });
        if let Some(max) = params.max_tokens {
            body["max_tokens"] = json!(max);
        }
        if !params.stop.is_empty() {
            body["stop"] = json!(params.stop);
        }
        body
    }

    async fn attempt(
        &self,
        messages: &[ChatMessage],
        params: &GenParams,
        on_delta: &mut (dyn for<'s> FnMut(&'s str) + Send),
    ) -> Attempt {
        let stream = self.config.stream;
        let resp = match self
            .client
            .post(&self.config.endpoint)
            .bearer_auth(&self.config.api_key)
            .json(&self.body(messages, params, stream))
            .send()
            .await
        {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(LlmError::backend(None, e.to_string())),
        };
        let status = resp.status().as_u16();
        if !resp.status().is_success() {
            let text = resp.text().await.unwrap_or_default();
            let err = LlmError::backend(Some(status), text);
            return if is_retryable(status) {
                Attempt::Retry(err)
            } else {
                Attempt::Fail(err)
            };
        }
        if !stream {
            let value: Value = match resp.json().await {
                Ok(v) => v,
                Err(e) => return Attempt::Fail(LlmError::backend(Some(status), e.to_string())),
            };
            let Some(text) = value
                .pointer("/choices/0/message/content")
                .and_then(Value::as_str)
            else {
                return Attempt::Fail(LlmError::backend(Some(status), "response has no message content"));
            };
            on_delta(text);
            return Attempt::Done(Completion {
                text: text.to_string(),
                usage: parse_usage(&value),
            });
        }
        let mut body = resp.bytes_stream();
        let mut buf = String::new();
        let mut text = String::new();
        let mut usage = None;
        while let Some(chunk) = body.next().await {
            let chunk = match chunk {
                Ok(c) => c,
                Err(e) => return Attempt::Fail(LlmError::backend(Some(status), e.to_string())),
            };
            buf.push_str(&String::from_utf8_lossy(&chunk));
            while let Some(nl) = buf.find('\n') {
                let line: String = buf.drain(..=nl).collect();
                let Some(data) = line.trim().strip_prefix("data:") else {
                    continue;
                };
                let data = data.trim();
                if data == "[DONE]" {
                    return Attempt::Done(Completion { text, usage });
                }
                let Ok(value) = serde_json::from_str::<Value>(data) else {
                    continue;
                };
                if let Some(delta) = value.pointer("/choices/0/delta/content").and_then(Value::as_str) {
                    on_delta(delta);
                    text.push_str(delta);
                }
                usage = parse_usage(&value).or(usage);
            }
        }
        Attempt::Done(Completion { text, usage })
    }
}

fn parse_usage(value: &Value) -> Option<TokenUsage> {
    let usage = value.get("usage")?;
    Some(TokenUsage {
        prompt_tokens: usage.get("prompt_tokens")?.as_u64()?,
        completion_tokens: usage.get("completion_tokens")?.as_u64()?,
    })
}

#[async_trait]
impl LlmBackend for LiveChat {
    async fn generate(&self, messages: &[ChatMessage], params: &GenParams) -> Result<Completion, LlmError> {
        self.generate_stream(messages, params, &mut |_| {}).await
    }

    async fn generate_stream(
        &self,
        messages: &[ChatMessage],
        params: &GenParams,
        on_delta: &mut (dyn for<'s> FnMut(&'s str) + Send),
    ) -> Result<Completion, LlmError> {
        let mut attempt = 0u32;
        loop {
            match self.attempt(messages, params, on_delta).await {
                Attempt::Done(c) => return Ok(c),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) if attempt >= self.config.max_retries => return Err(e),
                Attempt::Retry(_) => {
                    tokio::time::sleep(self.config.backoff_base * 2u32.pow(attempt)).await;
                    attempt += 1;
                    self.retries.fetch_add(1, Ordering::SeqCst);
                }
            }
        }
    }
}

#[derive(Deserialize)]
struct BingResponse {
    #[serde(rename = "webPages")]
    web_pages: Option<BingPages>,
}

#[derive(Deserialize)]
struct BingPages {
    #[serde(default)]
    value: Vec<BingPage>,
}

#[derive(Deserialize)]
struct BingPage {
    name: String,
    url: String,
    #[serde(default)]
    snippet: String,
}

/// Maps a Bing web-search JSON body to hits ranked by position.
pub fn parse_bing_response(body: &str, engine: &str, k: usize) -> Result<Vec<SearchHit>, SearchError> {
    let resp: BingResponse = serde_json::from_str(body).map_err(|e| SearchError::Backend {
        status: None,
        message: format!("malformed search response: {e}"),
    })?;
    Ok(resp
        .web_pages
        .map(|p| p.value)
        .unwrap_or_default()
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, page)| SearchHit {
            url: normalize_url(&page.url),
            title: page.name,
            summary: page.snippet,
            source_engine: engine.to_string(),
            rank: i as u32 + 1,
        })
        .collect())
}

/// Bing-compatible web search client.
pub struct LiveSearch {
    id: String,
    endpoint: String,
    api_key: String,
    client: reqwest::Client,
}

impl LiveSearch {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Result<Self, SearchError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| SearchError::Backend {
                status: None,
                message: e.to_string(),
            })?;
        Ok(Self {
            id: "bing".into(),
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            client,
        })
    }
}

#[async_trait]
impl SearchBackend for LiveSearch {
    fn id(&self) -> &str {
        &self.id
    }

    async fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, SearchError> {
        let url = url::Url::parse_with_params(&self.endpoint, &[("q", query), ("count", &k.to_string())])
            .map_err(|e| SearchError::Backend {
                status: None,
                message: format!("bad search endpoint: {e}"),
            })?;
        let resp = self
            .client
            .get(url)
            .header("Ocp-Apim-Subscription-Key", &self.api_key)
            .send()
            .await
            .map_err(|e| {
                if e.is_timeout() {
                    SearchError::Timeout
                } else {
                    SearchError::Backend {
                        status: None,
                        message: e.to_string(),
                    }
                }
            })?;
        let status = resp.status().as_u16();
        let body = resp.text().await.map_err(|e| SearchError::Backend {
            status: Some(status),
            message: e.to_string(),
        })?;
        if !(200..300).contains(&status) {
            return Err(SearchError::Backend {
                status: Some(status),
                message: body,
            });
        }
        parse_bing_response(&body, &self.id, k)
    }
}

/// HTTP page fetcher with a byte cap.
pub struct LiveFetcher {
    client: reqwest::Client,
    max_bytes: usize,
}

impl LiveFetcher {
    pub fn new(timeout: Duration, max_bytes: usize) -> Result<Self, FetchError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| FetchError::Http {
                status: None,
                message: e.to_string(),
            })?;
        Ok(Self { client, max_bytes })
    }
}

#[async_trait]
impl PageFetcher for LiveFetcher {
    async fn fetch(&self, url: &str) -> Result<RawPage, FetchError> {
        let http_err = |e: reqwest::Error| {
            if e.is_timeout() {
                FetchError::Timeout
            } else {
                FetchError::Http {
                    status: e.status().map(|s| s.as_u16()),
                    message: e.to_string(),
                }
            }
        };
        let resp = self.client.get(url).send().await.map_err(http_err)?;
        let status = resp.status().as_u16();
        if !resp.status().is_success() {
            return Err(FetchError::Http {
                status: Some(status),
                message: format!("HTTP {status}"),
            });
        }
        let content_type = resp
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .unwrap_or("text/html")
            .to_string();
        let mut bytes: Vec<u8> = Vec::new();
        let mut stream = resp.bytes_stream();
        while let Some(chunk) = stream.next().await {
            let chunk = chunk.map_err(http_err)?;
            let room = self.max_bytes - bytes.len();
            bytes.extend_from_slice(&chunk[..chunk.len().min(room)]);
            if bytes.len() >= self.max_bytes {
                break;
            }
        }
        Ok(RawPage {
            url: normalize_url(url),
            content_type,
            body: String::from_utf8_lossy(&bytes).into_owned(),
        })
    }
}
