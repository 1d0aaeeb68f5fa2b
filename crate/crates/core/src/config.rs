//! Engine configuration: a TOML file whose keys follow the field paths of
//! [`EngineConfig`], e.g. `planner.max_turns = 6` or `backend.llm = "live"`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::PlannerConfig;
use crate::searcher::SearcherConfig;
use crate::templates::TemplateError;

pub const ENV_LLM_ENDPOINT: &str = "DS_LLM_ENDPOINT";
pub const ENV_LLM_KEY: &str = "DS_LLM_KEY";
pub const ENV_SEARCH_ENDPOINT: &str = "DS_SEARCH_ENDPOINT";
pub const ENV_SEARCH_KEY: &str = "DS_SEARCH_KEY";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Fixture,
    Live,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSelection {
    pub llm: BackendKind,
    pub search: BackendKind,
    pub fetch: BackendKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplatesConfig {
    /// Directory holding one file per template name; built-ins when unset.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureConfig {
    pub corpus: Option<PathBuf>,
    pub script: Option<PathBuf>,
    pub llm_latency_ms: u64,
    pub search_latency_ms: u64,
    pub fetch_latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiveConfig {
    pub model: String,
    pub llm_timeout_secs: f64,
    pub search_timeout_secs: f64,
    pub fetch_timeout_secs: f64,
    pub max_fetch_bytes: usize,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            model: "gpt-4o".into(),
            llm_timeout_secs: 120.0,
            search_timeout_secs: 20.0,
            fetch_timeout_secs: 20.0,
            max_fetch_bytes: crate::backends::DEFAULT_MAX_FETCH_BYTES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    /// Where finished sessions are persisted; nothing is written when unset.
    pub trace_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            trace_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub concurrency: usize,
    pub react_max_steps: usize,
    pub react_top_k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            concurrency: 4,
            react_max_steps: 6,
            react_top_k: 5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub backend: BackendSelection,
    pub planner: PlannerConfig,
    pub searcher: SearcherConfig,
    pub templates: TemplatesConfig,
    pub fixture: FixtureConfig,
    pub live: LiveConfig,
    pub service: ServiceConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("environment variable {0} is required by the live backend")]
    MissingEnv(&'static str),
    #[error("cannot load {what}: {reason}")]
    Fixture { what: &'static str, reason: String },
}

impl EngineConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Reads, resolves relative paths against the file's directory, and
    /// validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.templates.dir);
        fix(&mut self.fixture.corpus);
        fix(&mut self.fixture.script);
        fix(&mut self.service.trace_dir);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.planner.validate().map_err(ConfigError::Invalid)?;
        self.searcher.validate().map_err(ConfigError::Invalid)?;
        if self.eval.concurrency == 0 {
            return Err(ConfigError::Invalid("eval.concurrency must be at least 1".into()));
        }
        if self.eval.react_max_steps == 0 {
            return Err(ConfigError::Invalid("eval.react_max_steps must be at least 1".into()));
        }
        if self.service.bind.parse::<std::net::SocketAddr>().is_err() {
            return Err(ConfigError::Invalid(format!(
                "service.bind `{}` is not a socket address",
                self.service.bind
            )));
        }
        let needs_corpus = self.backend.search == BackendKind::Fixture || self.backend.fetch == BackendKind::Fixture;
        let checks = [
            ("fixture.corpus", &self.fixture.corpus, needs_corpus),
            ("fixture.script", &self.fixture.script, self.backend.llm == BackendKind::Fixture),
        ];
        for (key, path, required) in checks {
            match path {
                Some(p) if !p.is_file() => {
                    return Err(ConfigError::Invalid(format!("{key}: {} does not exist", p.display())));
                }
                None if required => return Err(ConfigError::Invalid(format!("{key} is required by the fixture backend"))),
                _ => {}
            }
        }
        if let Some(dir) = &self.templates.dir {
            crate::templates::TemplateSet::load_dir(dir)?;
        }
        Ok(())
    }
}
