use super::{DiagCode, Diagnostic, Span};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Str(String),
    Number,
    Dot,
    LParen,
    RParen,
    Comma,
    Eq,
    Semi,
    Newline,
    Other,
    /// Already reported by the lexer.
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: Span,
}

/// Tokenizes `src`. Newlines inside parentheses are dropped, as in Python's
/// implicit line joining. Lexical errors are reported and lexing continues.
pub(crate) fn lex(src: &str) -> (Vec<Token>, Vec<Diagnostic>) {
    let mut lx = Lexer {
        src,
        pos: 0,
        depth: 0,
        tokens: Vec::new(),
        diags: Vec::new(),
    };
    lx.run();
    (lx.tokens, lx.diags)
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    depth: usize,
    tokens: Vec<Token>,
    diags: Vec<Diagnostic>,
}

impl Lexer<'_> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn push(&mut self, tok: Tok, start: usize) {
        self.tokens.push(Token {
            tok,
            span: Span::new(start, self.pos - start),
        });
    }

    fn run(&mut self) {
        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                '\n' => {
                    self.pos += 1;
                    if self.depth == 0 {
                        self.push(Tok::Newline, start);
                    }
                }
                '#' => {
                    let end = self.src[start..]
                        .find('\n')
                        .map_or(self.src.len(), |i| start + i);
                    self.pos = end;
                }
                '\\' if self.src[start + 1..].starts_with('\n') => self.pos += 2,
                c if c.is_whitespace() => self.pos += c.len_utf8(),
                '"' | '\'' => self.string(c),
                c if c.is_alphabetic() || c == '_' => {
                    let end = self.src[start..]
                        .char_indices()
                        .find(|(_, ch)| !(ch.is_alphanumeric() || *ch == '_'))
                        .map_or(self.src.len(), |(i, _)| start + i);
                    self.pos = end;
                    self.push(Tok::Ident(self.src[start..end].to_string()), start);
                }
                c if c.is_ascii_digit() => {
                    let end = self.src[start..]
                        .char_indices()
                        .find(|(_, ch)| !(ch.is_ascii_alphanumeric() || *ch == '.' || *ch == '_'))
                        .map_or(self.src.len(), |(i, _)| start + i);
                    self.pos = end;
                    self.push(Tok::Number, start);
                }
                _ => {
                    self.pos += c.len_utf8();
                    let tok = match c {
                        '.' => Tok::Dot,
                        '(' => {
                            self.depth += 1;
                            Tok::LParen
                        }
                        ')' => {
                            self.depth = self.depth.saturating_sub(1);
                            Tok::RParen
                        }
                        ',' => Tok::Comma,
                        '=' => Tok::Eq,
                        ';' => Tok::Semi,
                        _ => Tok::Other,
                    };
                    self.push(tok, start);
                }
            }
        }
    }

    fn string(&mut self, quote: char) {
        let start = self.pos;
        let triple: String = std::iter::repeat_n(quote, 3).collect();
        let is_triple = self.src[start..].starts_with(&triple);
        self.pos += if is_triple { 3 } else { 1 };
        let mut value = String::new();
        loop {
            let rest = &self.src[self.pos..];
            if is_triple && rest.starts_with(&triple) {
                self.pos += 3;
                break;
            }
            let Some(c) = rest.chars().next() else {
                return self.unterminated(start, self.src.len());
            };
            if c == quote && !is_triple {
                self.pos += 1;
                break;
            }
            if c == '\n' && !is_triple {
                // The newline stays in the stream so the next statement lexes normally.
                return self.unterminated(start, self.pos);
            }
            if c == '\\' {
                let Some(next) = rest[1..].chars().next() else {
                    return self.unterminated(start, self.src.len());
                };
                self.pos += 1 + next.len_utf8();
                match next {
                    '\\' => value.push('\\'),
                    '\'' => value.push('\''),
                    '"' => value.push('"'),
                    'n' => value.push('\n'),
                    't' => value.push('\t'),
                    '\n' => {}
                    other => {
                        value.push('\\');
                        value.push(other);
                    }
                }
                continue;
            }
            value.push(c);
            self.pos += c.len_utf8();
        }
        self.push(Tok::Str(value), start);
    }

    fn unterminated(&mut self, start: usize, end: usize) {
        self.pos = end;
        self.depth = 0;
        self.diags.push(Diagnostic::error(
            DiagCode::UnterminatedString,
            Span::new(start, end - start),
            "string literal is not terminated",
        ));
        self.tokens.push(Token {
            tok: Tok::Error,
            span: Span::new(start, end - start),
        });
    }
}
