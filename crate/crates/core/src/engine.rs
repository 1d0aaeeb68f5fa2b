//! Wires configuration into backends, searchers and planners.

use std::sync::Arc;
use std::time::Duration;

use crate::backends::{
    Backends, FixtureCorpus, FixtureFetcher, FixtureSearch, LiveChat, LiveChatConfig, LiveFetcher, LiveSearch,
    LlmBackend, PageFetcher, ScriptedLlm, SearchBackend,
};
use crate::config::{
    BackendKind, ConfigError, EngineConfig, ENV_LLM_ENDPOINT, ENV_LLM_KEY, ENV_SEARCH_ENDPOINT, ENV_SEARCH_KEY,
};
use crate::events::EventBus;
use crate::planner::{Planner, SessionAborted, SessionOutcome};
use crate::searcher::Searcher;
use crate::templates::TemplateSet;

fn env(name: &'static str) -> Result<String, ConfigError> {
    std::env::var(name)
        .ok()
        .filter(|v| !v.trim().is_empty())
        .ok_or(ConfigError::MissingEnv(name))
}

fn ms(v: u64) -> Duration {
    Duration::from_millis(v)
}

#[derive(Clone)]
pub struct Engine {
    config: EngineConfig,
    templates: Arc<TemplateSet>,
    backends: Backends,
}

impl Engine {
    pub fn new(config: EngineConfig, templates: TemplateSet, backends: Backends) -> Self {
        Self {
            config,
            templates: Arc::new(templates),
            backends,
        }
    }

    /// Builds the backends the configuration selects. Live backends read
    /// their endpoints and keys from the environment.
    pub fn from_config(config: EngineConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let templates = match &config.templates.dir {
            Some(dir) => TemplateSet::load_dir(dir)?,
            None => TemplateSet::builtin(),
        };
        let fx = &config.fixture;
        let corpus = match &fx.corpus {
            Some(path) => Some(Arc::new(FixtureCorpus::load(path).map_err(|e| ConfigError::Fixture {
                what: "fixture corpus",
                reason: e.to_string(),
            })?)),
            None => None,
        };
        let need_corpus = || {
            corpus.clone().ok_or(ConfigError::Invalid(
                "fixture.corpus is required by the fixture backend".into(),
            ))
        };

        let llm: Arc<dyn LlmBackend> = match config.backend.llm {
            BackendKind::Fixture => {
                let path = fx.script.as_ref().ok_or(ConfigError::Invalid(
                    "fixture.script is required by the fixture backend".into(),
                ))?;
                let script = ScriptedLlm::load(path).map_err(|e| ConfigError::Fixture {
                    what: "fixture script",
                    reason: e.to_string(),
                })?;
                Arc::new(script.with_latency(ms(fx.llm_latency_ms)))
            }
            BackendKind::Live => {
                let mut cfg = LiveChatConfig::new(env(ENV_LLM_ENDPOINT)?, env(ENV_LLM_KEY)?, config.live.model.clone());
                cfg.timeout = Duration::from_secs_f64(config.live.llm_timeout_secs);
                Arc::new(LiveChat::new(cfg).map_err(|e| ConfigError::Invalid(e.to_string()))?)
            }
        };
        let search: Arc<dyn SearchBackend> = match config.backend.search {
            BackendKind::Fixture => Arc::new(FixtureSearch::new(need_corpus()?).with_latency(ms(fx.search_latency_ms))),
            BackendKind::Live => Arc::new(
                LiveSearch::new(
                    env(ENV_SEARCH_ENDPOINT)?,
                    env(ENV_SEARCH_KEY)?,
                    Duration::from_secs_f64(config.live.search_timeout_secs),
                )
                .map_err(|e| ConfigError::Invalid(e.to_string()))?,
            ),
        };
        let fetcher: Arc<dyn PageFetcher> = match config.backend.fetch {
            BackendKind::Fixture => Arc::new(FixtureFetcher::new(&*need_corpus()?).with_latency(ms(fx.fetch_latency_ms))),
            BackendKind::Live => Arc::new(
                LiveFetcher::new(
                    Duration::from_secs_f64(config.live.fetch_timeout_secs),
                    config.live.max_fetch_bytes,
                )
                .map_err(|e| ConfigError::Invalid(e.to_string()))?,
            ),
        };
        Ok(Self::new(
            config,
            templates,
            Backends {
                llm,
                engines: vec![search],
                fetcher,
            },
        ))
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn templates(&self) -> &Arc<TemplateSet> {
        &self.templates
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    pub fn searcher(&self) -> Searcher {
        Searcher::new(
            Arc::clone(&self.backends.llm),
            self.backends.engines.clone(),
            Arc::clone(&self.backends.fetcher),
            self.config.searcher.clone(),
            Arc::clone(&self.templates),
        )
    }

    pub fn planner(&self, events: Arc<EventBus>) -> Planner {
        Planner::new(
            self.config.planner.clone(),
            Arc::clone(&self.backends.llm),
            self.searcher(),
            Arc::clone(&self.templates),
            events,
        )
    }

    /// Runs one session to completion on a fresh event bus.
    pub async fn ask(&self, question: &str) -> (Arc<EventBus>, Result<SessionOutcome, SessionAborted>) {
        let bus = EventBus::new(uuid::Uuid::new_v4().to_string());
        let result = self.planner(Arc::clone(&bus)).run_session(question).await;
        (bus, result)
    }
}
