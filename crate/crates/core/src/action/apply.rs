use super::{ActionKind, CodeAction, DiagCode, Diagnostic};
use crate::graph::{GraphError, NodeKind, ThoughtGraph};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ApplyOutcome {
    /// Search nodes created by this batch, in order.
    pub new_search_nodes: Vec<String>,
    /// Actions that changed the graph (duplicate edges excluded).
    pub applied: Vec<CodeAction>,
    /// One warning per skipped action.
    pub warnings: Vec<Diagnostic>,
    /// Set when a cycle aborted the rest of the batch.
    pub aborted: Option<GraphError>,
}

/// Applies a batch produced by a clean parse.
///
/// Individual rejections are skipped with a warning; a would-be cycle stops
/// the batch, leaving earlier actions in place.
pub fn apply_actions(g: &mut ThoughtGraph, actions: &[CodeAction]) -> ApplyOutcome {
    apply_actions_limited(g, actions, usize::MAX)
}

/// Like [`apply_actions`], refusing Search nodes beyond `max_search_nodes`.
pub fn apply_actions_limited(
    g: &mut ThoughtGraph,
    actions: &[CodeAction],
    max_search_nodes: usize,
) -> ApplyOutcome {
    let mut out = ApplyOutcome::default();
    for action in actions {
        let result = match &action.kind {
            ActionKind::AddNode { name, content } => {
                let search_nodes = g.nodes().filter(|n| n.kind == NodeKind::Search).count();
                if name != crate::graph::END_NAME && search_nodes >= max_search_nodes {
                    out.warnings.push(Diagnostic::warning(
                        DiagCode::NodeLimit,
                        action.span,
                        format!("node limit of {max_search_nodes} reached; `{name}` skipped"),
                    ));
                    continue;
                }
                g.add_node(name, content).map(|n| {
                    if n.kind == NodeKind::Search {
                        out.new_search_nodes.push(n.name.clone());
                    }
                    true
                })
            }
            ActionKind::AddEdge { from, to } => g.add_edge(from, to),
        };
        match result {
            Ok(true) => out.applied.push(action.clone()),
            Ok(false) => {}
            Err(e @ GraphError::CycleCreated { .. }) => {
                out.aborted = Some(e);
                break;
            }
            Err(e) => out.warnings.push(Diagnostic::warning(
                DiagCode::Graph(e.code()),
                action.span,
                e.to_string(),
            )),
        }
    }
    out
}
