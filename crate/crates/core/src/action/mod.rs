//! The planner's action language.
//!
//! The planner model writes code against a `graph` object. Instead of running
//! that code, we extract the last fenced block, parse it with a closed
//! grammar of two calls, and apply the resulting [`CodeAction`]s directly.
//!
//! ```text
//! program := stmt*
//! stmt    := "graph" "." method "(" args ")"
//! method  := add_node | add_edge
//! args    := arg ("," arg)* ","?
//! arg     := (ident "=")? string-literal
//! ```

mod apply;
mod lexer;
mod parser;

use serde::{Deserialize, Serialize};

pub use apply::{apply_actions, apply_actions_limited, ApplyOutcome};
pub use parser::parse;

/// Statements allowed in one code block.
pub const MAX_STATEMENTS: usize = 64;

/// Byte range into the code text.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub offset: usize,
    pub len: usize,
}

impl Span {
    pub fn new(offset: usize, len: usize) -> Self {
        Self { offset, len }
    }

    pub fn end(&self) -> usize {
        self.offset + self.len
    }

    pub fn slice<'a>(&self, src: &'a str) -> Option<&'a str> {
        src.get(self.offset..self.end())
    }

    /// 1-based line and column (in chars) of the span start.
    pub fn line_col(&self, src: &str) -> (usize, usize) {
        let upto = src.get(..self.offset.min(src.len())).unwrap_or(src);
        let line = upto.matches('\n').count() + 1;
        let col = upto.rsplit('\n').next().unwrap_or("").chars().count() + 1;
        (line, col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagCode {
    UnknownMethod,
    BadReceiver,
    NonLiteralArgument,
    ArityMismatch,
    UnknownKeyword,
    UnterminatedString,
    UnexpectedToken,
    TooManyStatements,
    /// A graph-level rejection of an otherwise well-formed action.
    Graph(&'static str),
    NodeLimit,
}

impl DiagCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DiagCode::UnknownMethod => "UnknownMethod",
            DiagCode::BadReceiver => "BadReceiver",
            DiagCode::NonLiteralArgument => "NonLiteralArgument",
            DiagCode::ArityMismatch => "ArityMismatch",
            DiagCode::UnknownKeyword => "UnknownKeyword",
            DiagCode::UnterminatedString => "UnterminatedString",
            DiagCode::UnexpectedToken => "UnexpectedToken",
            DiagCode::TooManyStatements => "TooManyStatements",
            DiagCode::Graph(code) => code,
            DiagCode::NodeLimit => "NodeLimit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub span: Span,
    pub code: DiagCode,
    pub message: String,
}

impl Diagnostic {
    pub fn error(code: DiagCode, span: Span, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            span,
            code,
            message: message.into(),
        }
    }

    pub fn warning(code: DiagCode, span: Span, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            span,
            code,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// `<severity> <line>:<col> <code> <message>`
    pub fn render(&self, src: &str) -> String {
        let (line, col) = self.span.line_col(src);
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        format!("{sev} {line}:{col} {} {}", self.code.as_str(), self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ActionKind {
    AddNode { name: String, content: String },
    AddEdge { from: String, to: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeAction {
    #[serde(flatten)]
    pub kind: ActionKind,
    pub span: Span,
}

impl CodeAction {
    pub fn add_node(name: &str, content: &str) -> Self {
        Self {
            kind: ActionKind::AddNode {
                name: name.into(),
                content: content.into(),
            },
            span: Span::default(),
        }
    }

    pub fn add_edge(from: &str, to: &str) -> Self {
        Self {
            kind: ActionKind::AddEdge {
                from: from.into(),
                to: to.into(),
            },
            span: Span::default(),
        }
    }
}

impl std::fmt::Display for ActionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ActionKind::AddNode { name, content } => write!(
                f,
                "graph.add_node(node_name=\"{}\", node_content=\"{}\")",
                escape(name),
                escape(content)
            ),
            ActionKind::AddEdge { from, to } => write!(
                f,
                "graph.add_edge(start_node=\"{}\", end_node=\"{}\")",
                escape(from),
                escape(to)
            ),
        }
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

/// Renders actions as a program the parser accepts.
pub fn print_actions(actions: &[ActionKind]) -> String {
    actions.iter().map(|a| format!("{a}\n")).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParseOutcome {
    pub actions: Vec<CodeAction>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParseOutcome {
    pub fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(Diagnostic::is_error)
    }
}

/// Pulls the code out of a planner message.
///
/// Returns the last fenced block. Without any fence, the whole message is
/// returned only when it parses cleanly into at least one action.
pub fn extract_code(message: &str) -> Option<String> {
    let mut blocks: Vec<String> = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in message.lines() {
        let is_fence = line.trim_start().starts_with("```");
        match (&mut current, is_fence) {
            (None, true) => current = Some(Vec::new()),
            (Some(lines), true) => {
                blocks.push(lines.join("\n"));
                current = None;
            }
            (Some(lines), false) => lines.push(line),
            (None, false) => {}
        }
    }
    if let Some(lines) = current {
        blocks.push(lines.join("\n"));
    }
    if let Some(last) = blocks.pop() {
        return Some(last);
    }
    let outcome = parse(message);
    (!outcome.has_errors() && !outcome.actions.is_empty()).then(|| message.to_string())
}
