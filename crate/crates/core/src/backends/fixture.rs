use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FetchError, PageFetcher, RawPage, SearchBackend, SearchError};
use crate::searcher::{normalize_url, SearchHit};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureDoc {
    pub id: String,
    pub url: String,
    pub title: String,
    pub summary: String,
    #[serde(default)]
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("corpus line {line}: {reason}")]
pub struct CorpusError {
    pub line: usize,
    pub reason: String,
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// An in-memory document set standing in for the web.
#[derive(Debug, Clone, Default)]
pub struct FixtureCorpus {
    docs: Vec<FixtureDoc>,
    tokens: Vec<HashSet<String>>,
}

impl FixtureCorpus {
    pub fn new(docs: Vec<FixtureDoc>) -> Result<Self, CorpusError> {
        let mut ids = HashSet::new();
        let mut urls = HashSet::new();
        for (i, d) in docs.iter().enumerate() {
            let err = |reason: String| CorpusError { line: i + 1, reason };
            for (field, value) in [("id", &d.id), ("url", &d.url), ("title", &d.title), ("summary", &d.summary)] {
                if value.trim().is_empty() {
                    return Err(err(format!("empty `{field}`")));
                }
            }
            if !ids.insert(d.id.clone()) {
                return Err(err(format!("duplicate id `{}`", d.id)));
            }
            if !urls.insert(normalize_url(&d.url)) {
                return Err(err(format!("duplicate url `{}`", d.url)));
            }
        }
        let tokens = docs
            .iter()
            .map(|d| {
                tokenize(&d.title)
                    .chain(tokenize(&d.summary))
                    .chain(tokenize(&d.body))
                    .collect()
            })
            .collect();
        Ok(Self { docs, tokens })
    }

    /// One JSON record per line: `id, url, title, summary, body`.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut docs = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let doc: FixtureDoc = serde_json::from_str(line).map_err(|e| CorpusError {
                line: idx + 1,
                reason: e.to_string(),
            })?;
            docs.push(doc);
        }
        Self::new(docs)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError {
            line: 0,
            reason: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn docs(&self) -> &[FixtureDoc] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Token-overlap retrieval.
    ///
    /// A document scores `|q ∩ d| / |q|` over token sets; zero scores are
    /// dropped and the rest ordered by score then id.
    pub fn search(&self, query: &str, k: usize, engine: &str) -> Vec<SearchHit> {
        let q: BTreeSet<String> = tokenize(query).collect();
        if q.is_empty() {
            return Vec::new();
        }
        // All scores share the denominator |q|, so the overlap count orders them.
        let mut scored: Vec<(usize, &FixtureDoc)> = self
            .docs
            .iter()
            .zip(&self.tokens)
            .map(|(d, toks)| (q.iter().filter(|t| toks.contains(*t)).count(), d))
            .filter(|(s, _)| *s > 0)
            .collect();
        scored.sort_by(|a, b| (Reverse(a.0), &a.1.id).cmp(&(Reverse(b.0), &b.1.id)));
        scored
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, (_, d))| SearchHit {
                url: normalize_url(&d.url),
                title: d.title.clone(),
                summary: d.summary.clone(),
                source_engine: engine.to_string(),
                rank: i as u32 + 1,
            })
            .collect()
    }
}

/// Search engine over a [`FixtureCorpus`], with optional injected latency.
#[derive(Debug, Clone)]
pub struct FixtureSearch {
    corpus: Arc<FixtureCorpus>,
    id: String,
    latency: Duration,
}

impl FixtureSearch {
    pub fn new(corpus: Arc<FixtureCorpus>) -> Self {
        Self {
            corpus,
            id: "fixture".into(),
            latency: Duration::ZERO,
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }
}

#[async_trait]
impl SearchBackend for FixtureSearch {
    fn id(&self) -> &str {
        &self.id
    }

    async fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, SearchError> {
        if !self.latency.is_zero() {
            tokio::time::sleep(self.latency).await;
        }
        Ok(self.corpus.search(query, k, &self.id))
    }
}

/// Serves corpus bodies by normalized URL.
#[derive(Debug, Clone)]
pub struct FixtureFetcher {
    pages: Arc<HashMap<String, String>>,
    latency: Duration,
}

impl FixtureFetcher {
    pub fn new(corpus: &FixtureCorpus) -> Self {
        let pages = corpus
            .docs()
            .iter()
            .map(|d| (normalize_url(&d.url), d.body.clone()))
            .collect();
        Self {
            pages: Arc::new(pages),
            latency: Duration::ZERO,
        }
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }
}

#[async_trait]
impl PageFetcher for FixtureFetcher {
    async fn fetch(&self, url: &str) -> Result<RawPage, FetchError> {
        if !self.latency.is_zero() {
            tokio::time::sleep(self.latency).await;
        }
        let key = normalize_url(url);
        let body = self
            .pages
            .get(&key)
            .ok_or_else(|| FetchError::NotFound(url.to_string()))?;
        let content_type = if body.trim_start().starts_with('<') {
            "text/html"
        } else {
            "text/plain"
        };
        Ok(RawPage {
            url: key,
            content_type: content_type.into(),
            body: body.clone(),
        })
    }
}
