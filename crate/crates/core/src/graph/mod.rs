//! The thought graph: a DAG of sub-questions rooted at the user question.
//!
//! Nodes move through `Pending -> Running -> (Done | Failed)`. Edges encode
//! reasoning dependencies; a node becomes ready once every predecessor is
//! resolved. Acyclicity is enforced on every edge insertion.

mod snapshot;

use std::collections::{BTreeSet, HashSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use snapshot::{content_digest, GraphSnapshot, NodeLine, SnapshotParseError};

/// Name of the START node holding the user question.
pub const ROOT_NAME: &str = "root";
/// Name of the END node holding the final answer.
pub const END_NAME: &str = "response";

/// Maximum length of a node name, including the leading letter.
pub const MAX_NAME_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("question must not be empty")]
    EmptyQuestion,
    #[error("node content must not be empty")]
    EmptyContent,
    #[error("node `{0}` already exists")]
    DuplicateNode(String),
    #[error("invalid node name `{0}`: expected [a-z][a-z0-9_]{{0,63}}")]
    InvalidName(String),
    #[error("`{0}` is reserved for the start node")]
    ReservedName(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("self loop on `{0}`")]
    SelfLoop(String),
    #[error("edge {from} -> {to} would create a cycle")]
    CycleCreated { from: String, to: String },
    #[error("the end node `{0}` cannot have outgoing edges")]
    EdgeFromEnd(String),
    #[error("node `{name}` cannot move from {from} to {to}")]
    InvalidTransition {
        name: String,
        from: NodeState,
        to: NodeState,
    },
}

impl GraphError {
    /// Stable short code used in diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            GraphError::EmptyQuestion => "EmptyQuestion",
            GraphError::EmptyContent => "EmptyContent",
            GraphError::DuplicateNode(_) => "DuplicateNode",
            GraphError::InvalidName(_) => "InvalidName",
            GraphError::ReservedName(_) => "ReservedName",
            GraphError::UnknownNode(_) => "UnknownNode",
            GraphError::SelfLoop(_) => "SelfLoop",
            GraphError::CycleCreated { .. } => "CycleCreated",
            GraphError::EdgeFromEnd(_) => "EdgeFromEnd",
            GraphError::InvalidTransition { .. } => "InvalidTransition",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Start,
    Search,
    End,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Start => "start",
            NodeKind::Search => "search",
            NodeKind::End => "end",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "start" => Some(NodeKind::Start),
            "search" => Some(NodeKind::Search),
            "end" => Some(NodeKind::End),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeState {
    Pending,
    Running,
    Done,
    Failed,
}

impl NodeState {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeState::Pending => "pending",
            NodeState::Running => "running",
            NodeState::Done => "done",
            NodeState::Failed => "failed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pending" => Some(NodeState::Pending),
            "running" => Some(NodeState::Running),
            "done" => Some(NodeState::Done),
            "failed" => Some(NodeState::Failed),
            _ => None,
        }
    }

    /// Done or Failed.
    pub fn is_resolved(self) -> bool {
        matches!(self, NodeState::Done | NodeState::Failed)
    }
}

impl std::fmt::Display for NodeState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub url: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeResponse {
    pub answer_text: String,
    pub citations: Vec<Citation>,
    /// Hex sha256 of the searcher transcript that produced this answer.
    pub transcript_digest: String,
}

/// Either a response or an error message, as reported by a searcher.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeOutcome {
    Answered(NodeResponse),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub name: String,
    pub content: String,
    pub kind: NodeKind,
    pub state: NodeState,
    pub response: Option<NodeResponse>,
    pub error: Option<String>,
    pub seq: u64,
}

/// Returns true when `name` matches `[a-z][a-z0-9_]{0,63}`.
pub fn is_valid_name(name: &str) -> bool {
    let bytes = name.as_bytes();
    if bytes.is_empty() || bytes.len() > MAX_NAME_LEN || !bytes[0].is_ascii_lowercase() {
        return false;
    }
    bytes[1..]
        .iter()
        .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || *b == b'_')
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThoughtGraph {
    nodes: IndexMap<String, GraphNode>,
    edges: BTreeSet<(String, String)>,
    end_name: Option<String>,
    next_seq: u64,
}

impl ThoughtGraph {
    /// Creates a graph holding only the START node, already Done.
    pub fn new(question: &str) -> Result<Self, GraphError> {
        if question.trim().is_empty() {
            return Err(GraphError::EmptyQuestion);
        }
        let mut nodes = IndexMap::new();
        nodes.insert(
            ROOT_NAME.to_string(),
            GraphNode {
                name: ROOT_NAME.to_string(),
                content: question.to_string(),
                kind: NodeKind::Start,
                state: NodeState::Done,
                response: None,
                error: None,
                seq: 0,
            },
        );
        Ok(Self {
            nodes,
            edges: BTreeSet::new(),
            end_name: None,
            next_seq: 1,
        })
    }

    pub fn root_name(&self) -> &str {
        ROOT_NAME
    }

    pub fn end_name(&self) -> Option<&str> {
        self.end_name.as_deref()
    }

    pub fn question(&self) -> &str {
        &self.nodes[ROOT_NAME].content
    }

    pub fn node(&self, name: &str) -> Option<&GraphNode> {
        self.nodes.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.nodes.contains_key(name)
    }

    /// Nodes in insertion order.
    pub fn nodes(&self) -> impl Iterator<Item = &GraphNode> {
        self.nodes.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.edges.contains(&(from.to_string(), to.to_string()))
    }

    /// Direct predecessors of `name`, ordered by their insertion seq.
    pub fn parents(&self, name: &str) -> Vec<&GraphNode> {
        let mut out: Vec<&GraphNode> = self
            .edges
            .iter()
            .filter(|(_, to)| to == name)
            .filter_map(|(from, _)| self.nodes.get(from))
            .collect();
        out.sort_by_key(|n| n.seq);
        out
    }

    pub fn children(&self, name: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|(from, _)| from == name)
            .map(|(_, to)| to.as_str())
            .collect()
    }

    pub fn add_node(&mut self, name: &str, content: &str) -> Result<&GraphNode, GraphError> {
        if name == ROOT_NAME {
            return Err(GraphError::ReservedName(name.to_string()));
        }
        if !is_valid_name(name) {
            return Err(GraphError::InvalidName(name.to_string()));
        }
        if self.nodes.contains_key(name) {
            return Err(GraphError::DuplicateNode(name.to_string()));
        }
        if content.trim().is_empty() {
            return Err(GraphError::EmptyContent);
        }
        let kind = if name == END_NAME {
            self.end_name = Some(name.to_string());
            NodeKind::End
        } else {
            NodeKind::Search
        };
        let node = GraphNode {
            name: name.to_string(),
            content: content.to_string(),
            kind,
            state: NodeState::Pending,
            response: None,
            error: None,
            seq: self.next_seq,
        };
        self.next_seq += 1;
        self.nodes.insert(name.to_string(), node);
        Ok(&self.nodes[name])
    }

    /// Inserts `from -> to`. Returns `Ok(false)` when the edge already existed.
    pub fn add_edge(&mut self, from: &str, to: &str) -> Result<bool, GraphError> {
        for endpoint in [from, to] {
            if !self.nodes.contains_key(endpoint) {
                return Err(GraphError::UnknownNode(endpoint.to_string()));
            }
        }
        if from == to {
            return Err(GraphError::SelfLoop(from.to_string()));
        }
        if self.nodes[from].kind == NodeKind::End {
            return Err(GraphError::EdgeFromEnd(from.to_string()));
        }
        if self.has_edge(from, to) {
            return Ok(false);
        }
        if self.reaches(to, from) {
            return Err(GraphError::CycleCreated {
                from: from.to_string(),
                to: to.to_string(),
            });
        }
        self.edges.insert((from.to_string(), to.to_string()));
        Ok(true)
    }

    fn reaches(&self, start: &str, target: &str) -> bool {
        let mut stack = vec![start];
        let mut seen = HashSet::new();
        while let Some(cur) = stack.pop() {
            if cur == target {
                return true;
            }
            if !seen.insert(cur) {
                continue;
            }
            stack.extend(
                self.edges
                    .iter()
                    .filter(|(from, _)| from == cur)
                    .map(|(_, to)| to.as_str()),
            );
        }
        false
    }

    /// Pending nodes whose predecessors are all resolved, in seq order.
    ///
    /// A Failed predecessor counts as resolved. The END node is only ready
    /// once every other node is resolved.
    pub fn ready_nodes(&self) -> Vec<String> {
        let all_others_resolved = |end: &str| {
            self.nodes
                .values()
                .filter(|n| n.name != end)
                .all(|n| n.state.is_resolved())
        };
        self.nodes
            .values()
            .filter(|n| n.state == NodeState::Pending)
            .filter(|n| {
                self.edges
                    .iter()
                    .filter(|(_, to)| *to == n.name)
                    .all(|(from, _)| self.nodes[from].state.is_resolved())
            })
            .filter(|n| n.kind != NodeKind::End || all_others_resolved(&n.name))
            .map(|n| n.name.clone())
            .collect()
    }

    /// Pending -> Running.
    pub fn mark_running(&mut self, name: &str) -> Result<(), GraphError> {
        let node = self
            .nodes
            .get_mut(name)
            .ok_or_else(|| GraphError::UnknownNode(name.to_string()))?;
        if node.state != NodeState::Pending {
            return Err(GraphError::InvalidTransition {
                name: name.to_string(),
                from: node.state,
                to: NodeState::Running,
            });
        }
        node.state = NodeState::Running;
        Ok(())
    }

    /// Running -> Done (with response) or Running -> Failed (with error).
    pub fn record_result(&mut self, name: &str, outcome: NodeOutcome) -> Result<(), GraphError> {
        let node = self
            .nodes
            .get_mut(name)
            .ok_or_else(|| GraphError::UnknownNode(name.to_string()))?;
        let target = match outcome {
            NodeOutcome::Answered(_) => NodeState::Done,
            NodeOutcome::Failed(_) => NodeState::Failed,
        };
        if node.state != NodeState::Running {
            return Err(GraphError::InvalidTransition {
                name: name.to_string(),
                from: node.state,
                to: target,
            });
        }
        match outcome {
            NodeOutcome::Answered(resp) => node.response = Some(resp),
            NodeOutcome::Failed(err) => node.error = Some(err),
        }
        node.state = target;
        Ok(())
    }

    /// Search nodes with no outgoing edge into the END node.
    pub fn leaves_not_connected_to_end(&self) -> Vec<String> {
        let Some(end) = self.end_name.as_deref() else {
            return Vec::new();
        };
        self.nodes
            .values()
            .filter(|n| n.kind == NodeKind::Search)
            .filter(|n| self.children(&n.name).is_empty())
            .filter(|n| !self.has_edge(&n.name, end))
            .map(|n| n.name.clone())
            .collect()
    }

    /// Node names in a topological order, or `None` if a cycle exists.
    pub fn topological_order(&self) -> Option<Vec<String>> {
        let mut indegree: IndexMap<&str, usize> =
            self.nodes.keys().map(|k| (k.as_str(), 0)).collect();
        for (_, to) in &self.edges {
            *indegree.get_mut(to.as_str())? += 1;
        }
        let mut queue: Vec<&str> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(k, _)| *k)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(cur) = queue.pop() {
            order.push(cur.to_string());
            for (from, to) in &self.edges {
                if from == cur {
                    let d = indegree.get_mut(to.as_str())?;
                    *d -= 1;
                    if *d == 0 {
                        queue.push(to);
                    }
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    pub fn snapshot(&self) -> GraphSnapshot {
        GraphSnapshot::of(self)
    }
}
