//! Python bindings: the thought graph, the action language, scoring helpers
//! and a one-call fixture session runner.

use std::path::Path;

use deepsearch_core::action::{self, ActionKind};
use deepsearch_core::config::EngineConfig;
use deepsearch_core::engine::Engine;
use deepsearch_core::graph::{self, NodeOutcome, NodeResponse};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// DAG of sub-questions rooted at the user question.
#[pyclass]
pub struct ThoughtGraph {
    inner: graph::ThoughtGraph,
}

#[pymethods]
impl ThoughtGraph {
    #[new]
    fn new(question: &str) -> PyResult<Self> {
        Ok(Self {
            inner: graph::ThoughtGraph::new(question).map_err(value_err)?,
        })
    }

    #[getter]
    fn question(&self) -> String {
        self.inner.question().to_string()
    }

    fn add_node(&mut self, name: &str, content: &str) -> PyResult<()> {
        self.inner.add_node(name, content).map(|_| ()).map_err(value_err)
    }

    /// Returns False when the edge already existed.
    fn add_edge(&mut self, start: &str, end: &str) -> PyResult<bool> {
        self.inner.add_edge(start, end).map_err(value_err)
    }

    fn ready_nodes(&self) -> Vec<String> {
        self.inner.ready_nodes()
    }

    fn mark_running(&mut self, name: &str) -> PyResult<()> {
        self.inner.mark_running(name).map_err(value_err)
    }

    fn record_answer(&mut self, name: &str, answer: &str) -> PyResult<()> {
        let response = NodeResponse {
            answer_text: answer.to_string(),
            citations: Vec::new(),
            transcript_digest: String::new(),
        };
        self.inner
            .record_result(name, NodeOutcome::Answered(response))
            .map_err(value_err)
    }

    fn record_failure(&mut self, name: &str, error: &str) -> PyResult<()> {
        self.inner
            .record_result(name, NodeOutcome::Failed(error.to_string()))
            .map_err(value_err)
    }

    fn state(&self, name: &str) -> PyResult<String> {
        self.inner
            .node(name)
            .map(|n| n.state.as_str().to_string())
            .ok_or_else(|| value_err(format!("unknown node `{name}`")))
    }

    fn edges(&self) -> Vec<(String, String)> {
        self.inner.edges().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    fn topological_order(&self) -> Option<Vec<String>> {
        self.inner.topological_order()
    }

    /// Canonical snapshot text.
    fn snapshot(&self) -> String {
        self.inner.snapshot().render()
    }

    /// Applies planner code; returns rendered diagnostics.
    fn apply_code(&mut self, code: &str) -> Vec<String> {
        let parsed = action::parse(code);
        let mut diags: Vec<String> = parsed.diagnostics.iter().map(|d| d.render(code)).collect();
        if !parsed.has_errors() {
            let applied = action::apply_actions(&mut self.inner, &parsed.actions);
            diags.extend(applied.warnings.iter().map(|d| d.render(code)));
            diags.extend(applied.aborted.map(|e| format!("error {e}")));
        }
        diags
    }

    fn __len__(&self) -> usize {
        self.inner.node_count()
    }

    fn __repr__(&self) -> String {
        format!(
            "ThoughtGraph(nodes={}, edges={})",
            self.inner.node_count(),
            self.inner.edge_count()
        )
    }
}

/// Parses planner code into `(kind, a, b)` tuples and rendered diagnostics.
#[pyfunction]
fn parse(code: &str) -> (Vec<(String, String, String)>, Vec<String>) {
    let out = action::parse(code);
    let actions = out
        .actions
        .iter()
        .map(|a| match &a.kind {
            ActionKind::AddNode { name, content } => ("add_node".to_string(), name.clone(), content.clone()),
            ActionKind::AddEdge { from, to } => ("add_edge".to_string(), from.clone(), to.clone()),
        })
        .collect();
    let diags = out.diagnostics.iter().map(|d| d.render(code)).collect();
    (actions, diags)
}

#[pyfunction]
fn extract_code(message: &str) -> Option<String> {
    action::extract_code(message)
}

#[pyfunction]
fn exact_match(prediction: &str, gold_answers: Vec<String>) -> bool {
    deepsearch_core::eval::exact_match(prediction, &gold_answers)
}

#[pyfunction]
fn normalize_answer(text: &str) -> String {
    deepsearch_core::eval::normalize_answer(text)
}

#[pyfunction]
fn normalize_url(url: &str) -> String {
    deepsearch_core::searcher::normalize_url(url)
}

#[pyclass(get_all)]
pub struct SessionResult {
    pub session_id: String,
    pub status: String,
    pub answer: Option<String>,
    pub citations: Vec<(String, String)>,
    pub snapshot: String,
    /// One JSON document per event.
    pub events: Vec<String>,
}

/// Runs one session with the backends named in the config file.
#[pyfunction]
fn run_session(py: Python<'_>, config_path: &str, question: &str) -> PyResult<SessionResult> {
    let config = EngineConfig::load(Path::new(config_path)).map_err(value_err)?;
    let engine = Engine::from_config(config).map_err(value_err)?;
    let question = question.to_string();
    py.detach(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let (bus, result) = rt.block_on(engine.ask(&question));
        let (session, answer) = match result {
            Ok(o) => (o.session, Some(o.answer)),
            Err(a) => (a.session, None),
        };
        let events = bus
            .events()
            .iter()
            .map(|e| serde_json::to_string(e).map_err(|e| PyRuntimeError::new_err(e.to_string())))
            .collect::<PyResult<Vec<_>>>()?;
        Ok(SessionResult {
            session_id: session.session_id.clone(),
            status: session.status.as_str().to_string(),
            citations: answer
                .as_ref()
                .map(|a| a.citations.iter().map(|c| (c.title.clone(), c.url.clone())).collect())
                .unwrap_or_default(),
            answer: answer.map(|a| a.answer_text),
            snapshot: session.graph.snapshot().render(),
            events,
        })
    })
}

#[pymodule]
fn deepsearch(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ThoughtGraph>()?;
    m.add_class::<SessionResult>()?;
    m.add_function(wrap_pyfunction!(parse, m)?)?;
    m.add_function(wrap_pyfunction!(extract_code, m)?)?;
    m.add_function(wrap_pyfunction!(exact_match, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_answer, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_url, m)?)?;
    m.add_function(wrap_pyfunction!(run_session, m)?)?;
    Ok(())
}
