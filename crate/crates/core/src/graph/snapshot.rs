use std::fmt::Write as _;

use thiserror::Error;

use super::{NodeKind, NodeState, ThoughtGraph};
use crate::digest::sha256_hex;

/// Canonical text form of a graph.
///
/// ```text
/// node <name> <kind> <state> <seq> <content-sha256-prefix8>
/// edge <from> <to>
/// ```
///
/// Node lines are ordered by seq, edge lines lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSnapshot {
    pub nodes: Vec<NodeLine>,
    pub edges: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeLine {
    pub name: String,
    pub kind: NodeKind,
    pub state: NodeState,
    pub seq: u64,
    pub content_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("snapshot line {line}: {reason}")]
pub struct SnapshotParseError {
    pub line: usize,
    pub reason: String,
}

/// First eight hex chars of the sha256 of `content`.
pub fn content_digest(content: &str) -> String {
    sha256_hex(content.as_bytes())[..8].to_string()
}

impl GraphSnapshot {
    pub fn of(g: &ThoughtGraph) -> Self {
        let mut nodes: Vec<NodeLine> = g
            .nodes()
            .map(|n| NodeLine {
                name: n.name.clone(),
                kind: n.kind,
                state: n.state,
                seq: n.seq,
                content_digest: content_digest(&n.content),
            })
            .collect();
        nodes.sort_by(|a, b| a.seq.cmp(&b.seq).then_with(|| a.name.cmp(&b.name)));
        let edges = g
            .edges()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        Self { nodes, edges }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let _ = writeln!(
                out,
                "node {} {} {} {} {}",
                n.name,
                n.kind.as_str(),
                n.state.as_str(),
                n.seq,
                n.content_digest
            );
        }
        let mut edges = self.edges.clone();
        edges.sort();
        for (from, to) in edges {
            let _ = writeln!(out, "edge {from} {to}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, SnapshotParseError> {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let err = |reason: &str| SnapshotParseError {
                line: idx + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split(' ').collect();
            match fields.as_slice() {
                [] | [""] => continue,
                ["node", name, kind, state, seq, digest] => {
                    if !edges.is_empty() {
                        return Err(err("node line after edge lines"));
                    }
                    nodes.push(NodeLine {
                        name: name.to_string(),
                        kind: NodeKind::parse(kind).ok_or_else(|| err("bad kind"))?,
                        state: NodeState::parse(state).ok_or_else(|| err("bad state"))?,
                        seq: seq.parse().map_err(|_| err("bad seq"))?,
                        content_digest: digest.to_string(),
                    });
                }
                ["edge", from, to] => edges.push((from.to_string(), to.to_string())),
                _ => return Err(err("unrecognized line")),
            }
        }
        Ok(Self { nodes, edges })
    }
}

impl std::fmt::Display for GraphSnapshot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.render())
    }
}
