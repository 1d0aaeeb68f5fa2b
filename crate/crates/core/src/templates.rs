//! Named prompt templates with `{{placeholder}}` substitution.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

pub const PLANNER_SYSTEM: &str = "planner.system";
pub const PLANNER_FINALIZE: &str = "planner.finalize";
pub const SEARCHER_REWRITE: &str = "searcher.rewrite";
pub const SEARCHER_SELECT: &str = "searcher.select";
pub const SEARCHER_SUMMARIZE: &str = "searcher.summarize";
pub const REACT_SYSTEM: &str = "react.system";
pub const JUDGE_SYSTEM: &str = "judge.system";

pub const TEMPLATE_NAMES: [&str; 7] = [
    PLANNER_SYSTEM,
    PLANNER_FINALIZE,
    SEARCHER_REWRITE,
    SEARCHER_SELECT,
    SEARCHER_SUMMARIZE,
    REACT_SYSTEM,
    JUDGE_SYSTEM,
];

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("missing template `{name}` in {dir}")]
    Missing { name: String, dir: String },
    #[error("template directory {dir}: {source}")]
    Io {
        dir: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<String, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    /// The templates compiled into the crate.
    pub fn builtin() -> Self {
        let pairs = [
            (PLANNER_SYSTEM, include_str!("../templates/planner.system")),
            (PLANNER_FINALIZE, include_str!("../templates/planner.finalize")),
            (SEARCHER_REWRITE, include_str!("../templates/searcher.rewrite")),
            (SEARCHER_SELECT, include_str!("../templates/searcher.select")),
            (SEARCHER_SUMMARIZE, include_str!("../templates/searcher.summarize")),
            (REACT_SYSTEM, include_str!("../templates/react.system")),
            (JUDGE_SYSTEM, include_str!("../templates/judge.system")),
        ];
        Self {
            templates: pairs
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.trim_end().to_string()))
                .collect(),
        }
    }

    /// Loads every required template from `dir`; any missing file is an error.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        if !dir.is_dir() {
            return Err(TemplateError::Missing {
                name: TEMPLATE_NAMES[0].to_string(),
                dir: dir.display().to_string(),
            });
        }
        let mut templates = BTreeMap::new();
        for name in TEMPLATE_NAMES {
            let path = dir.join(name);
            if !path.is_file() {
                return Err(TemplateError::Missing {
                    name: name.to_string(),
                    dir: dir.display().to_string(),
                });
            }
            let text = std::fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                dir: dir.display().to_string(),
                source,
            })?;
            templates.insert(name.to_string(), text.trim_end().to_string());
        }
        Ok(Self { templates })
    }

    pub fn get(&self, name: &str) -> &str {
        self.templates.get(name).map(String::as_str).unwrap_or("")
    }

    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> String {
        render(self.get(name), vars)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}

/// Replaces each `{{key}}` with its value. Unknown placeholders stay as-is.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{{{key}}}}}"), value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_every_template() {
        let t = TemplateSet::builtin();
        for name in TEMPLATE_NAMES {
            assert!(!t.get(name).is_empty(), "{name}");
        }
    }

    #[test]
    fn substitution() {
        assert_eq!(render("Q: {{question}} {{other}}", &[("question", "why")]), "Q: why {{other}}");
    }

    #[test]
    fn missing_template_is_named() {
        let dir = tempfile::tempdir().unwrap();
        for name in &TEMPLATE_NAMES[..3] {
            std::fs::write(dir.path().join(name), "x").unwrap();
        }
        let err = TemplateSet::load_dir(dir.path()).unwrap_err();
        assert!(err.to_string().contains(SEARCHER_SELECT), "{err}");
    }

    #[test]
    fn load_complete_dir() {
        let dir = tempfile::tempdir().unwrap();
        for name in TEMPLATE_NAMES {
            std::fs::write(dir.path().join(name), format!("{name} text\n")).unwrap();
        }
        let t = TemplateSet::load_dir(dir.path()).unwrap();
        assert_eq!(t.get(JUDGE_SYSTEM), "judge.system text");
    }
}
