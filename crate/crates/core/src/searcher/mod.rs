//! The per-node retrieval agent.
//!
//! Four stages, coarse to fine: rewrite the sub-question into several
//! queries, fan them out over every engine and merge the hits by URL, let the
//! model pick a few pages to read in full, then summarize those pages into a
//! cited answer. Every prompt is prefixed with the root question and the
//! answers of the node's direct parents.

mod html;
mod url;

use std::collections::HashSet;
use std::sync::{Arc, LazyLock, Mutex};
use std::time::Duration;

use futures::future::join_all;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{ChatMessage, GenParams, LlmBackend, LlmError, PageFetcher, SearchBackend, SearchError};
use crate::digest::sha256_hex;
use crate::graph::{Citation, GraphError, NodeResponse, NodeState, ThoughtGraph};
use crate::templates::{self, TemplateSet};

pub use html::{collapse_whitespace, html_to_text};
pub use url::{merge_hits, normalize_url};

/// Fixed prompt overhead allowed on top of `max_pages_to_read * page_char_budget`.
pub const PROMPT_OVERHEAD_CHARS: usize = 12_000;

const TITLE_CHARS: usize = 150;
const URL_CHARS: usize = 300;
const SNIPPET_CHARS: usize = 300;
const NODE_QUESTION_CHARS: usize = 2_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub url: String,
    pub title: String,
    pub summary: String,
    pub source_engine: String,
    /// Position within its engine's result list, from 1.
    pub rank: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageDocument {
    pub url: String,
    pub title: String,
    pub body_text: String,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParentAnswer {
    pub node: String,
    /// The parent's answer, or a note explaining why there is none.
    pub text: String,
    pub failed: bool,
}

/// What a searcher knows besides its own sub-question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearcherContext {
    pub root_question: String,
    pub parent_answers: Vec<ParentAnswer>,
    pub node_question: String,
}

/// Collects the root question and the direct parents' answers for `node`.
///
/// The root contributes only through `root_question`.
pub fn build_searcher_context(g: &ThoughtGraph, node: &str) -> Result<SearcherContext, GraphError> {
    let target = g.node(node).ok_or_else(|| GraphError::UnknownNode(node.to_string()))?;
    let parent_answers = g
        .parents(node)
        .into_iter()
        .filter(|p| p.name != g.root_name())
        .map(|p| match (&p.state, &p.response) {
            (NodeState::Done, Some(r)) => ParentAnswer {
                node: p.name.clone(),
                text: r.answer_text.clone(),
                failed: false,
            },
            (NodeState::Failed, _) => ParentAnswer {
                node: p.name.clone(),
                text: format!(
                    "no answer available; this step failed ({})",
                    p.error.as_deref().unwrap_or("unknown error")
                ),
                failed: true,
            },
            _ => ParentAnswer {
                node: p.name.clone(),
                text: "no answer available".into(),
                failed: true,
            },
        })
        .collect();
    Ok(SearcherContext {
        root_question: g.question().to_string(),
        parent_answers,
        node_question: target.content.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearcherConfig {
    pub max_query_variants: usize,
    pub hits_per_query: usize,
    pub merged_hit_cap: usize,
    pub max_pages_to_read: usize,
    pub page_char_budget: usize,
    /// Cap on the root-question plus parent-answers prefix.
    pub context_char_budget: usize,
    pub search_timeout_secs: f64,
    pub fetch_timeout_secs: f64,
}

impl Default for SearcherConfig {
    fn default() -> Self {
        Self {
            max_query_variants: 3,
            hits_per_query: 10,
            merged_hit_cap: 20,
            max_pages_to_read: 4,
            page_char_budget: 8_000,
            context_char_budget: 4_000,
            search_timeout_secs: 20.0,
            fetch_timeout_secs: 20.0,
        }
    }
}

impl SearcherConfig {
    /// Upper bound on the characters of any prompt this module assembles.
    pub fn prompt_char_limit(&self) -> usize {
        self.max_pages_to_read * self.page_char_budget + PROMPT_OVERHEAD_CHARS
    }

    pub fn validate(&self) -> Result<(), String> {
        let counts = [
            ("searcher.max_query_variants", self.max_query_variants),
            ("searcher.hits_per_query", self.hits_per_query),
            ("searcher.merged_hit_cap", self.merged_hit_cap),
            ("searcher.max_pages_to_read", self.max_pages_to_read),
            ("searcher.page_char_budget", self.page_char_budget),
            ("searcher.context_char_budget", self.context_char_budget),
        ];
        for (key, v) in counts {
            if v == 0 {
                return Err(format!("{key} must be at least 1"));
            }
        }
        for (key, v) in [
            ("searcher.search_timeout_secs", self.search_timeout_secs),
            ("searcher.fetch_timeout_secs", self.fetch_timeout_secs),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{key} must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearcherError {
    #[error("searcher timed out")]
    Timeout,
    #[error("every search engine call failed")]
    AllEnginesFailed,
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    QueryRewrite,
    SearchAggregation,
    PageSelection,
    Summarization,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineHits {
    pub query: String,
    pub engine: String,
    pub hits: Vec<SearchHit>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRecord {
    pub url: String,
    pub title: String,
    pub chars: usize,
    pub truncated: bool,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub prompt_digest: Option<String>,
    /// The user prompt sent for summarization, absent when no page was read.
    pub prompt: Option<String>,
    pub answer: String,
}

/// Append-only record of one searcher run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearcherTranscript {
    pub node: String,
    pub queries: Vec<String>,
    pub hits: Vec<EngineHits>,
    pub merged: Vec<SearchHit>,
    pub selected: Vec<String>,
    pub pages: Vec<PageRecord>,
    pub summary: Option<SummaryRecord>,
    pub citations: Vec<Citation>,
    pub stages: Vec<Stage>,
    pub notes: Vec<String>,
}

impl SearcherTranscript {
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).unwrap_or_default().as_bytes())
    }
}

/// Outcome of [`Searcher::run`].
#[derive(Debug, Clone)]
pub struct SearchRun {
    pub result: Result<NodeResponse, SearcherError>,
    pub transcript: SearcherTranscript,
}

fn truncate_chars(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Root question and parent answers, in the form every searcher prompt starts with.
pub fn render_context_prefix(ctx: &SearcherContext, budget: usize) -> String {
    let mut out = format!("Main question: {}\n", ctx.root_question);
    if !ctx.parent_answers.is_empty() {
        out.push_str("\nAnswers to prerequisite sub-questions:\n");
        for p in &ctx.parent_answers {
            out.push_str(&format!("[node {}] {}\n", p.node, p.text));
        }
    }
    truncate_chars(&out, budget).to_string()
}

static LIST_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"^\s*(?:[-*•]|\d+[.)]|query\s*\d*:)\s*"#).unwrap());
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+").unwrap());
static CITE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[(\d+(?:\s*,\s*\d+)*)\]").unwrap());

/// Parses a rewrite reply into at most `max` queries.
pub fn parse_query_lines(reply: &str, max: usize) -> Vec<String> {
    reply
        .lines()
        .map(|l| LIST_MARKER.replace(l, "").trim().trim_matches('"').trim().to_string())
        .filter(|l| !l.is_empty())
        .take(max)
        .collect()
}

/// Extracts 1-based indices, dropping out-of-range values and repeats.
pub fn parse_indices(reply: &str, len: usize) -> Vec<usize> {
    let mut seen = HashSet::new();
    NUMBER
        .find_iter(reply)
        .filter_map(|m| m.as_str().parse::<usize>().ok())
        .filter(|i| (1..=len).contains(i))
        .filter(|i| seen.insert(*i))
        .collect()
}

/// Page indices cited as `[k]` or `[k, m]`, valid and deduplicated.
pub fn parse_citations(answer: &str, pages: usize) -> Vec<usize> {
    let mut seen = HashSet::new();
    CITE.captures_iter(answer)
        .flat_map(|c| {
            c[1].split(',')
                .filter_map(|n| n.trim().parse::<usize>().ok())
                .collect::<Vec<_>>()
        })
        .filter(|i| (1..=pages).contains(i))
        .filter(|i| seen.insert(*i))
        .collect()
}

#[derive(Clone)]
pub struct Searcher {
    llm: Arc<dyn LlmBackend>,
    engines: Vec<Arc<dyn SearchBackend>>,
    fetcher: Arc<dyn PageFetcher>,
    config: SearcherConfig,
    templates: Arc<TemplateSet>,
}

type SharedTranscript = Arc<Mutex<SearcherTranscript>>;

fn with<R>(t: &SharedTranscript, f: impl FnOnce(&mut SearcherTranscript) -> R) -> R {
    f(&mut t.lock().unwrap_or_else(|e| e.into_inner()))
}

impl Searcher {
    pub fn new(
        llm: Arc<dyn LlmBackend>,
        engines: Vec<Arc<dyn SearchBackend>>,
        fetcher: Arc<dyn PageFetcher>,
        config: SearcherConfig,
        templates: Arc<TemplateSet>,
    ) -> Self {
        Self {
            llm,
            engines,
            fetcher,
            config,
            templates,
        }
    }

    pub fn config(&self) -> &SearcherConfig {
        &self.config
    }

    fn prefix(&self, ctx: &SearcherContext) -> String {
        render_context_prefix(ctx, self.config.context_char_budget)
    }

    fn node_question(ctx: &SearcherContext) -> &str {
        truncate_chars(&ctx.node_question, NODE_QUESTION_CHARS)
    }

    /// Prompt for query rewriting.
    pub fn rewrite_prompt(&self, ctx: &SearcherContext) -> Vec<ChatMessage> {
        let max = self.config.max_query_variants.to_string();
        vec![
            ChatMessage::system(self.templates.render(templates::SEARCHER_REWRITE, &[("max_variants", &max)])),
            ChatMessage::user(format!("{}\nSub-question: {}", self.prefix(ctx), Self::node_question(ctx))),
        ]
    }

    /// Model-generated query variants plus the sub-question itself.
    ///
    /// Never fails: on a model error the sub-question alone is returned.
    pub async fn rewrite_queries(&self, ctx: &SearcherContext) -> (Vec<String>, Option<String>) {
        let (mut queries, note) = match self.llm.generate(&self.rewrite_prompt(ctx), &GenParams::default()).await {
            Ok(c) => (parse_query_lines(&c.text, self.config.max_query_variants), None),
            Err(e) => (Vec::new(), Some(format!("query rewrite failed: {e}"))),
        };
        let original = ctx.node_question.trim().to_string();
        if !queries.contains(&original) {
            queries.push(original);
        }
        let mut seen = HashSet::new();
        queries.retain(|q| seen.insert(q.clone()));
        (queries, note)
    }

    /// Runs every (query, engine) pair concurrently, in (query, engine) order.
    pub async fn fan_out_search(&self, queries: &[String]) -> Result<Vec<EngineHits>, SearcherError> {
        let timeout = Duration::from_secs_f64(self.config.search_timeout_secs);
        let k = self.config.hits_per_query;
        let calls = queries.iter().flat_map(|q| {
            self.engines.iter().map(move |engine| async move {
                let res = match tokio::time::timeout(timeout, engine.search(q, k)).await {
                    Ok(r) => r,
                    Err(_) => Err(SearchError::Timeout),
                };
                match res {
                    Ok(mut hits) => {
                        hits.truncate(k);
                        EngineHits {
                            query: q.clone(),
                            engine: engine.id().to_string(),
                            hits,
                            error: None,
                        }
                    }
                    Err(e) => EngineHits {
                        query: q.clone(),
                        engine: engine.id().to_string(),
                        hits: Vec::new(),
                        error: Some(e.to_string()),
                    },
                }
            })
        });
        let results = join_all(calls).await;
        if !results.is_empty() && results.iter().all(|r| r.error.is_some()) {
            return Err(SearcherError::AllEnginesFailed);
        }
        Ok(results)
    }

    /// Prompt listing the merged hits for page selection.
    pub fn select_prompt(&self, ctx: &SearcherContext, hits: &[SearchHit]) -> Vec<ChatMessage> {
        let max = self.config.max_pages_to_read.to_string();
        let mut listing = String::new();
        for (i, h) in hits.iter().enumerate() {
            listing.push_str(&format!(
                "[{}] {}\n{}\n{}\n\n",
                i + 1,
                truncate_chars(&h.title, TITLE_CHARS),
                truncate_chars(&h.url, URL_CHARS),
                truncate_chars(&h.summary, SNIPPET_CHARS)
            ));
        }
        vec![
            ChatMessage::system(self.templates.render(templates::SEARCHER_SELECT, &[("max_pages", &max)])),
            ChatMessage::user(format!(
                "{}\nSub-question: {}\n\nSearch results:\n{}",
                self.prefix(ctx),
                Self::node_question(ctx),
                listing.trim_end()
            )),
        ]
    }

    /// Asks the model which hits to read; falls back to the top hits.
    pub async fn select_pages(&self, ctx: &SearcherContext, hits: &[SearchHit]) -> (Vec<SearchHit>, Option<String>) {
        let max = self.config.max_pages_to_read;
        let fallback = || hits.iter().take(max).cloned().collect::<Vec<_>>();
        match self.llm.generate(&self.select_prompt(ctx, hits), &GenParams::default()).await {
            Ok(c) => {
                let picked: Vec<SearchHit> = parse_indices(&c.text, hits.len())
                    .into_iter()
                    .take(max)
                    .map(|i| hits[i - 1].clone())
                    .collect();
                if picked.is_empty() {
                    (fallback(), Some("page selection reply had no valid indices; using top hits".into()))
                } else {
                    (picked, None)
                }
            }
            Err(e) => (fallback(), Some(format!("page selection failed: {e}; using top hits"))),
        }
    }

    /// Fetches pages concurrently and reduces them to truncated plain text.
    /// Failed fetches are skipped and reported as notes.
    pub async fn fetch_pages(&self, selected: &[SearchHit]) -> (Vec<PageDocument>, Vec<String>) {
        let timeout = Duration::from_secs_f64(self.config.fetch_timeout_secs);
        let budget = self.config.page_char_budget;
        let fetches = selected.iter().map(|hit| async move {
            match tokio::time::timeout(timeout, self.fetcher.fetch(&hit.url)).await {
                Ok(Ok(raw)) => {
                    let text = if raw.content_type.contains("html") {
                        html_to_text(&raw.body)
                    } else {
                        collapse_whitespace(&raw.body)
                    };
                    let body_text = truncate_chars(&text, budget).to_string();
                    Ok(PageDocument {
                        url: hit.url.clone(),
                        title: hit.title.clone(),
                        truncated: body_text.len() < text.len(),
                        body_text,
                    })
                }
                Ok(Err(e)) => Err(format!("fetch {} failed: {e}", hit.url)),
                Err(_) => Err(format!("fetch {} timed out", hit.url)),
            }
        });
        let mut pages = Vec::new();
        let mut notes = Vec::new();
        for r in join_all(fetches).await {
            match r {
                Ok(p) => pages.push(p),
                Err(n) => notes.push(n),
            }
        }
        (pages, notes)
    }

    /// Prompt for the final summarization over the read pages.
    pub fn summarize_prompt(&self, ctx: &SearcherContext, pages: &[PageDocument]) -> Vec<ChatMessage> {
        let mut body = String::new();
        for (i, p) in pages.iter().enumerate() {
            body.push_str(&format!(
                "[{}] {} ({})\n{}\n\n",
                i + 1,
                truncate_chars(&p.title, TITLE_CHARS),
                truncate_chars(&p.url, URL_CHARS),
                p.body_text
            ));
        }
        vec![
            ChatMessage::system(self.templates.get(templates::SEARCHER_SUMMARIZE)),
            ChatMessage::user(format!(
                "{}\nSub-question: {}\n\nPages:\n{}",
                self.prefix(ctx),
                Self::node_question(ctx),
                body.trim_end()
            )),
        ]
    }

    /// Answers the sub-question from `pages`. With no pages the answer says
    /// that no evidence was found and the model is not called.
    pub async fn summarize(
        &self,
        ctx: &SearcherContext,
        pages: &[PageDocument],
    ) -> Result<(String, Vec<Citation>, SummaryRecord), LlmError> {
        if pages.is_empty() {
            let answer = format!("No evidence was found on the web for: {}", ctx.node_question.trim());
            let record = SummaryRecord {
                prompt_digest: None,
                prompt: None,
                answer: answer.clone(),
            };
            return Ok((answer, Vec::new(), record));
        }
        let messages = self.summarize_prompt(ctx, pages);
        let digest = sha256_hex(format!("{}\n{}", messages[0].content, messages[1].content).as_bytes());
        let answer = self.llm.generate(&messages, &GenParams::default()).await?.text;
        let mut cited = parse_citations(&answer, pages.len());
        if cited.is_empty() {
            cited = (1..=pages.len()).collect();
        }
        let citations = cited
            .into_iter()
            .map(|i| Citation {
                url: pages[i - 1].url.clone(),
                title: pages[i - 1].title.clone(),
            })
            .collect();
        let record = SummaryRecord {
            prompt_digest: Some(digest),
            prompt: messages.into_iter().nth(1).map(|m| m.content),
            answer: answer.clone(),
        };
        Ok((answer, citations, record))
    }

    async fn pipeline(&self, ctx: &SearcherContext, t: &SharedTranscript) -> Result<NodeResponse, SearcherError> {
        let (queries, note) = self.rewrite_queries(ctx).await;
        with(t, |t| {
            t.queries = queries.clone();
            t.notes.extend(note);
            t.stages.push(Stage::QueryRewrite);
        });

        let lists = self.fan_out_search(&queries).await;
        let lists = match lists {
            Ok(l) => l,
            Err(e) => {
                with(t, |t| t.notes.push(e.to_string()));
                return Err(e);
            }
        };
        let merged = merge_hits(
            &lists.iter().map(|l| l.hits.clone()).collect::<Vec<_>>(),
            self.config.merged_hit_cap,
        );
        with(t, |t| {
            t.notes.extend(
                lists
                    .iter()
                    .filter_map(|l| l.error.as_ref().map(|e| format!("search `{}` on {}: {e}", l.query, l.engine))),
            );
            t.hits = lists;
            t.merged = merged.clone();
            t.stages.push(Stage::SearchAggregation);
        });

        let mut pages = Vec::new();
        if !merged.is_empty() {
            let (selected, note) = self.select_pages(ctx, &merged).await;
            with(t, |t| {
                t.selected = selected.iter().map(|h| h.url.clone()).collect();
                t.notes.extend(note);
                t.stages.push(Stage::PageSelection);
            });
            let (fetched, notes) = self.fetch_pages(&selected).await;
            with(t, |t| {
                t.pages = fetched
                    .iter()
                    .map(|p| PageRecord {
                        url: p.url.clone(),
                        title: p.title.clone(),
                        chars: p.body_text.chars().count(),
                        truncated: p.truncated,
                        digest: sha256_hex(p.body_text.as_bytes()),
                    })
                    .collect();
                t.notes.extend(notes);
            });
            pages = fetched;
        }

        let (answer, citations, record) = self.summarize(ctx, &pages).await.inspect_err(|e| {
            with(t, |t| t.notes.push(format!("summarize failed: {e}")));
        })?;
        let digest = with(t, |t| {
            t.summary = Some(record);
            t.citations = citations.clone();
            t.stages.push(Stage::Summarization);
            t.digest()
        });
        Ok(NodeResponse {
            answer_text: answer,
            citations,
            transcript_digest: digest,
        })
    }

    /// Runs the full pipeline for one node.
    pub async fn run(&self, node: &str, ctx: &SearcherContext) -> SearchRun {
        self.run_with_timeout(node, ctx, None).await
    }

    /// Like [`Searcher::run`], reporting [`SearcherError::Timeout`] if the
    /// pipeline does not finish in time. The transcript keeps whatever stages
    /// completed.
    pub async fn run_with_timeout(&self, node: &str, ctx: &SearcherContext, timeout: Option<Duration>) -> SearchRun {
        let shared: SharedTranscript = Arc::new(Mutex::new(SearcherTranscript {
            node: node.to_string(),
            ..Default::default()
        }));
        let result = match timeout {
            Some(limit) => match tokio::time::timeout(limit, self.pipeline(ctx, &shared)).await {
                Ok(r) => r,
                Err(_) => {
                    with(&shared, |t| t.notes.push(format!("timed out after {limit:?}")));
                    Err(SearcherError::Timeout)
                }
            },
            None => self.pipeline(ctx, &shared).await,
        };
        let transcript = with(&shared, |t| t.clone());
        SearchRun { result, transcript }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeOutcome;

    fn ctx() -> SearcherContext {
        SearcherContext {
            root_question: "Q".into(),
            parent_answers: vec![],
            node_question: "sub".into(),
        }
    }

    #[test]
    fn context_for_root_child_has_no_parents() {
        let mut g = ThoughtGraph::new("Q").unwrap();
        g.add_node("a", "what is a").unwrap();
        g.add_edge("root", "a").unwrap();
        let c = build_searcher_context(&g, "a").unwrap();
        assert_eq!(c.root_question, "Q");
        assert!(c.parent_answers.is_empty());
        assert_eq!(c.node_question, "what is a");
        assert!(matches!(build_searcher_context(&g, "zz"), Err(GraphError::UnknownNode(_))));
    }

    #[test]
    fn context_carries_done_and_failed_parents() {
        let mut g = ThoughtGraph::new("Q").unwrap();
        for n in ["a", "b", "c"] {
            g.add_node(n, n).unwrap();
        }
        g.add_edge("root", "a").unwrap();
        g.add_edge("a", "c").unwrap();
        g.add_edge("b", "c").unwrap();
        g.mark_running("a").unwrap();
        g.record_result(
            "a",
            NodeOutcome::Answered(NodeResponse {
                answer_text: "A is 1".into(),
                citations: vec![],
                transcript_digest: String::new(),
            }),
        )
        .unwrap();
        g.mark_running("b").unwrap();
        g.record_result("b", NodeOutcome::Failed("timeout".into())).unwrap();
        let c = build_searcher_context(&g, "c").unwrap();
        assert_eq!(c.parent_answers.len(), 2);
        assert_eq!(c.parent_answers[0].text, "A is 1");
        assert!(c.parent_answers[1].failed);
        assert!(c.parent_answers[1].text.contains("timeout"));
    }

    #[test]
    fn query_line_parsing() {
        assert_eq!(
            parse_query_lines("1. alpha\n- \"beta\"\n\n* gamma\ndelta", 3),
            vec!["alpha", "beta", "gamma"]
        );
    }

    #[test]
    fn index_parsing() {
        assert_eq!(parse_indices("1, 3", 5), vec![1, 3]);
        assert_eq!(parse_indices("1, 99, 1", 5), vec![1]);
        assert!(parse_indices("I cannot decide", 5).is_empty());
    }

    #[test]
    fn citation_parsing() {
        assert_eq!(parse_citations("Founded in 1998 [2]", 3), vec![2]);
        assert_eq!(parse_citations("x [3, 1] y [1] [9]", 3), vec![3, 1]);
        assert!(parse_citations("no refs", 3).is_empty());
    }

    #[test]
    fn prefix_contains_parents_verbatim() {
        let mut c = ctx();
        c.parent_answers.push(ParentAnswer {
            node: "a".into(),
            text: "A is 1".into(),
            failed: false,
        });
        let p = render_context_prefix(&c, 4000);
        assert!(p.contains("Main question: Q"));
        assert!(p.contains("[node a] A is 1"));
        assert_eq!(render_context_prefix(&c, 5).chars().count(), 5);
    }
}
