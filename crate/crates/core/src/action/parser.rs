use super::lexer::{lex, Tok, Token};
use super::{ActionKind, CodeAction, DiagCode, Diagnostic, ParseOutcome, Span, MAX_STATEMENTS};

/// Parses a restricted program made of `graph.add_node(...)` and
/// `graph.add_edge(...)` calls with string-literal arguments.
///
/// Any Error diagnostic empties the action list.
pub fn parse(code: &str) -> ParseOutcome {
    let (tokens, mut diagnostics) = lex(code);
    let mut p = Parser {
        tokens,
        pos: 0,
        diags: Vec::new(),
    };
    let actions = p.program();
    diagnostics.append(&mut p.diags);
    diagnostics.sort_by_key(|d| d.span.offset);
    let has_errors = diagnostics.iter().any(Diagnostic::is_error);
    ParseOutcome {
        actions: if has_errors { Vec::new() } else { actions },
        diagnostics,
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    diags: Vec<Diagnostic>,
}

enum ArgValue {
    Positional(String, Span),
    Keyword(String, Span, String),
}

struct Method {
    name: &'static str,
    params: [&'static [&'static str]; 2],
}

const ADD_NODE: Method = Method {
    name: "add_node",
    params: [&["node_name", "name"], &["node_content", "content"]],
};

const ADD_EDGE: Method = Method {
    name: "add_edge",
    params: [&["start_node", "start"], &["end_node", "end"]],
};

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn last_span(&self) -> Span {
        self.tokens
            .get(self.pos.saturating_sub(1))
            .map(|t| t.span)
            .unwrap_or_default()
    }

    fn at_stmt_end(&self) -> bool {
        matches!(self.peek().map(|t| &t.tok), None | Some(Tok::Newline | Tok::Semi))
    }

    fn skip_to_stmt_end(&mut self) {
        while !self.at_stmt_end() {
            self.pos += 1;
        }
    }

    fn error(&mut self, code: DiagCode, span: Span, msg: impl Into<String>) {
        self.diags.push(Diagnostic::error(code, span, msg));
    }

    fn program(&mut self) -> Vec<CodeAction> {
        let mut actions = Vec::new();
        let mut statements = 0usize;
        loop {
            while matches!(self.peek().map(|t| &t.tok), Some(Tok::Newline | Tok::Semi)) {
                self.pos += 1;
            }
            let Some(first) = self.peek().cloned() else {
                break;
            };
            statements += 1;
            if statements > MAX_STATEMENTS {
                self.error(
                    DiagCode::TooManyStatements,
                    first.span,
                    format!("more than {MAX_STATEMENTS} statements in one code block"),
                );
                break;
            }
            let end = (self.pos..self.tokens.len())
                .find(|&i| matches!(self.tokens[i].tok, Tok::Newline | Tok::Semi))
                .unwrap_or(self.tokens.len());
            if self.tokens[self.pos..end].iter().any(|t| t.tok == Tok::Error) {
                self.pos = end;
                continue;
            }
            match self.statement() {
                Some(action) => actions.push(action),
                None => self.skip_to_stmt_end(),
            }
        }
        actions
    }

    fn statement(&mut self) -> Option<CodeAction> {
        let recv = self.bump()?;
        let start = recv.span.offset;
        match &recv.tok {
            Tok::Ident(name) if name == "graph" => {}
            Tok::Ident(name) => {
                self.error(
                    DiagCode::BadReceiver,
                    recv.span,
                    format!("`{name}` is not allowed; only graph.add_node and graph.add_edge calls are"),
                );
                return None;
            }
            _ => {
                self.error(
                    DiagCode::UnexpectedToken,
                    recv.span,
                    "expected a `graph.<method>(...)` statement",
                );
                return None;
            }
        }
        self.expect(Tok::Dot, "expected `.` after `graph`")?;
        let method_tok = self.bump();
        let method = match method_tok.as_ref().map(|t| &t.tok) {
            Some(Tok::Ident(m)) if m == ADD_NODE.name => &ADD_NODE,
            Some(Tok::Ident(m)) if m == ADD_EDGE.name => &ADD_EDGE,
            Some(Tok::Ident(m)) => {
                let span = method_tok.as_ref().unwrap().span;
                let m = m.clone();
                self.error(
                    DiagCode::UnknownMethod,
                    span,
                    format!("unknown method `{m}`; expected add_node or add_edge"),
                );
                return None;
            }
            _ => {
                let span = method_tok.map_or_else(|| self.last_span(), |t| t.span);
                self.error(DiagCode::UnexpectedToken, span, "expected a method name");
                return None;
            }
        };
        let method_span = method_tok.unwrap().span;
        self.expect(Tok::LParen, "expected `(`")?;
        let args = self.arguments()?;
        let close = self.last_span();
        if !self.at_stmt_end() {
            let span = self.peek().unwrap().span;
            self.error(
                DiagCode::UnexpectedToken,
                span,
                "expected end of statement after `)`",
            );
            return None;
        }
        let [a, b] = self.bind(method, method_span, args)?;
        let kind = if method.name == ADD_NODE.name {
            ActionKind::AddNode {
                name: a,
                content: b,
            }
        } else {
            ActionKind::AddEdge { from: a, to: b }
        };
        Some(CodeAction {
            kind,
            span: Span::new(start, close.end() - start),
        })
    }

    fn expect(&mut self, want: Tok, msg: &str) -> Option<Token> {
        match self.peek() {
            Some(t) if t.tok == want => self.bump(),
            Some(t) => {
                let span = t.span;
                self.error(DiagCode::UnexpectedToken, span, msg);
                None
            }
            None => {
                let span = self.last_span();
                self.error(DiagCode::UnexpectedToken, span, msg);
                None
            }
        }
    }

    fn arguments(&mut self) -> Option<Vec<ArgValue>> {
        let mut args = Vec::new();
        loop {
            let Some(tok) = self.bump() else {
                let span = self.last_span();
                self.error(DiagCode::UnexpectedToken, span, "missing `)`");
                return None;
            };
            match tok.tok {
                Tok::RParen => return Some(args),
                Tok::Str(s) => args.push(ArgValue::Positional(s, tok.span)),
                Tok::Ident(ident) if matches!(self.peek().map(|t| &t.tok), Some(Tok::Eq)) => {
                    self.pos += 1;
                    match self.bump() {
                        Some(Token {
                            tok: Tok::Str(s), ..
                        }) => args.push(ArgValue::Keyword(ident, tok.span, s)),
                        Some(other) => {
                            self.error(
                                DiagCode::NonLiteralArgument,
                                other.span,
                                "arguments must be string literals",
                            );
                            return None;
                        }
                        None => {
                            let span = self.last_span();
                            self.error(DiagCode::UnexpectedToken, span, "missing argument value");
                            return None;
                        }
                    }
                }
                Tok::Ident(_) | Tok::Number | Tok::Other | Tok::Error | Tok::LParen => {
                    self.error(
                        DiagCode::NonLiteralArgument,
                        tok.span,
                        "arguments must be string literals",
                    );
                    return None;
                }
                _ => {
                    self.error(DiagCode::UnexpectedToken, tok.span, "expected an argument");
                    return None;
                }
            }
            match self.bump() {
                Some(Token {
                    tok: Tok::RParen, ..
                }) => return Some(args),
                Some(Token {
                    tok: Tok::Comma, ..
                }) => {}
                Some(other) => {
                    self.error(
                        DiagCode::UnexpectedToken,
                        other.span,
                        "expected `,` or `)` after argument",
                    );
                    return None;
                }
                None => {
                    let span = self.last_span();
                    self.error(DiagCode::UnexpectedToken, span, "missing `)`");
                    return None;
                }
            }
        }
    }

    fn bind(&mut self, method: &Method, method_span: Span, args: Vec<ArgValue>) -> Option<[String; 2]> {
        let mut slots: [Option<String>; 2] = [None, None];
        let mut seen_keyword = false;
        let mut next_positional = 0usize;
        for arg in args {
            match arg {
                ArgValue::Positional(value, span) => {
                    if seen_keyword {
                        self.error(
                            DiagCode::UnexpectedToken,
                            span,
                            "positional argument follows keyword argument",
                        );
                        return None;
                    }
                    if next_positional >= 2 {
                        self.error(
                            DiagCode::ArityMismatch,
                            span,
                            format!("{} takes exactly 2 arguments", method.name),
                        );
                        return None;
                    }
                    slots[next_positional] = Some(value);
                    next_positional += 1;
                }
                ArgValue::Keyword(key, span, value) => {
                    seen_keyword = true;
                    let Some(idx) = method.params.iter().position(|names| names.contains(&key.as_str())) else {
                        self.error(
                            DiagCode::UnknownKeyword,
                            span,
                            format!(
                                "unknown keyword `{key}` for {}; expected {} or {}",
                                method.name, method.params[0][0], method.params[1][0]
                            ),
                        );
                        return None;
                    };
                    if slots[idx].is_some() {
                        self.error(
                            DiagCode::ArityMismatch,
                            span,
                            format!("{} given more than once", method.params[idx][0]),
                        );
                        return None;
                    }
                    slots[idx] = Some(value);
                }
            }
        }
        match slots {
            [Some(a), Some(b)] => Some([a, b]),
            [a, _] => {
                let missing = if a.is_none() { 0 } else { 1 };
                self.error(
                    DiagCode::ArityMismatch,
                    method_span,
                    format!(
                        "{} is missing argument `{}`",
                        method.name, method.params[missing][0]
                    ),
                );
                None
            }
        }
    }
}
