//! Textual connector language (`.reo` files).
//!
//! ```text
//! connector  := "connector" IDENT "{" nodes channels "}"
//! nodes      := "nodes" "{" nodedecl ("," nodedecl)* ";"? "}"
//! nodedecl   := ("boundary" | "internal") IDENT+
//! channels   := "channels" "{" (channel ";")* "}"
//! channel    := "sync" IDENT "->" IDENT
//!             | "fifo1" ("init" literal)? IDENT "->" IDENT
//!             | "syncdrain" IDENT IDENT
//!             | "filter" "(" ("=" | "!=") literal ")" IDENT "->" IDENT
//! literal    := STRING | INT
//! ```
//!
//! `//` starts a comment that runs to the end of the line. Strings accept the
//! escapes `\"` and `\\` only.

use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::connector::{
    channel_id, validate, Channel, ChannelKind, Connector, FilterConstraint, Literal, NodeDecl,
    NodeId, Violation, Visibility,
};

const KEYWORDS: &[&str] = &[
    "connector",
    "nodes",
    "channels",
    "boundary",
    "internal",
    "sync",
    "fifo1",
    "syncdrain",
    "filter",
    "init",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{span}: {message}")]
pub struct ParseError {
    pub span: SourceSpan,
    pub message: String,
    pub expected: Vec<String>,
}

impl ParseError {
    fn new(span: SourceSpan, message: impl Into<String>, expected: &[&str]) -> Self {
        ParseError {
            span,
            message: message.into(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Semi,
    Arrow,
    Eq,
    NotEq,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Int(_) => "integer literal".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Eq => "`=`".into(),
            Tok::NotEq => "`!=`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: SourceSpan,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            chars: text.chars().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn here(&self, length: usize) -> SourceSpan {
        SourceSpan {
            line: self.line,
            column: self.column,
            length,
        }
    }

    fn tokenize(mut self) -> Result<Vec<Token>, ParseError> {
        let mut out = Vec::new();
        loop {
            // whitespace and comments
            loop {
                match self.chars.peek() {
                    Some(c) if c.is_whitespace() => {
                        self.bump();
                    }
                    Some('/') => {
                        let start = self.here(1);
                        self.bump();
                        if self.chars.peek() == Some(&'/') {
                            while let Some(c) = self.bump() {
                                if c == '\n' {
                                    break;
                                }
                            }
                        } else {
                            return Err(ParseError::new(start, "unexpected character `/`", &[]));
                        }
                    }
                    _ => break,
                }
            }
            let (line, column) = (self.line, self.column);
            let Some(&c) = self.chars.peek() else {
                out.push(Token {
                    tok: Tok::Eof,
                    span: SourceSpan { line, column, length: 0 },
                });
                return Ok(out);
            };
            let mut len = 1;
            let tok = match c {
                '{' => self.single(Tok::LBrace),
                '}' => self.single(Tok::RBrace),
                '(' => self.single(Tok::LParen),
                ')' => self.single(Tok::RParen),
                ',' => self.single(Tok::Comma),
                ';' => self.single(Tok::Semi),
                '=' => self.single(Tok::Eq),
                '!' => {
                    self.bump();
                    if self.chars.peek() == Some(&'=') {
                        self.bump();
                        len = 2;
                        Tok::NotEq
                    } else {
                        return Err(ParseError::new(
                            SourceSpan { line, column, length: 1 },
                            "expected `!=`",
                            &["`!=`"],
                        ));
                    }
                }
                '-' => {
                    self.bump();
                    match self.chars.peek() {
                        Some('>') => {
                            self.bump();
                            len = 2;
                            Tok::Arrow
                        }
                        Some(d) if d.is_ascii_digit() => {
                            let (value, n) = self.integer(true, line, column)?;
                            len = n;
                            Tok::Int(value)
                        }
                        _ => {
                            return Err(ParseError::new(
                                SourceSpan { line, column, length: 1 },
                                "expected `->` or a negative integer",
                                &["`->`", "integer literal"],
                            ))
                        }
                    }
                }
                '"' => {
                    self.bump();
                    let mut s = String::new();
                    let mut n = 1;
                    loop {
                        match self.bump() {
                            None => {
                                return Err(ParseError::new(
                                    SourceSpan { line, column, length: n },
                                    "unterminated string literal",
                                    &["`\"`"],
                                ))
                            }
                            Some('"') => {
                                n += 1;
                                break;
                            }
                            Some('\\') => {
                                n += 1;
                                match self.bump() {
                                    Some(e @ ('"' | '\\')) => {
                                        n += 1;
                                        s.push(e);
                                    }
                                    _ => {
                                        return Err(ParseError::new(
                                            SourceSpan { line, column, length: n },
                                            "invalid escape in string literal",
                                            &["`\\\"`", "`\\\\`"],
                                        ))
                                    }
                                }
                            }
                            Some(c) => {
                                n += 1;
                                s.push(c);
                            }
                        }
                    }
                    len = n;
                    Tok::Str(s)
                }
                c if c.is_ascii_digit() => {
                    let (value, n) = self.integer(false, line, column)?;
                    len = n;
                    Tok::Int(value)
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let mut s = String::new();
                    while let Some(&c) = self.chars.peek() {
                        if c.is_ascii_alphanumeric() || c == '_' {
                            s.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    len = s.chars().count();
                    Tok::Ident(s)
                }
                other => {
                    return Err(ParseError::new(
                        SourceSpan { line, column, length: 1 },
                        format!("unexpected character {other:?}"),
                        &[],
                    ))
                }
            };
            out.push(Token {
                tok,
                span: SourceSpan { line, column, length: len },
            });
        }
    }

    fn single(&mut self, tok: Tok) -> Tok {
        self.bump();
        tok
    }

    fn integer(
        &mut self,
        negative: bool,
        line: usize,
        column: usize,
    ) -> Result<(i64, usize), ParseError> {
        let mut digits = String::new();
        if negative {
            digits.push('-');
        }
        while let Some(&c) = self.chars.peek() {
            if c.is_ascii_digit() {
                digits.push(c);
                self.bump();
            } else {
                break;
            }
        }
        let n = digits.len();
        digits.parse::<i64>().map(|v| (v, n)).map_err(|_| {
            ParseError::new(
                SourceSpan { line, column, length: n },
                "integer literal out of range",
                &[],
            )
        })
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &[&str]) -> ParseError {
        let t = self.peek();
        ParseError::new(
            t.span,
            format!("expected {}, found {}", expected.join(" or "), t.tok.describe()),
            expected,
        )
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token, ParseError> {
        if self.peek().tok == tok {
            Ok(self.advance())
        } else {
            Err(self.unexpected(&[what]))
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<Token, ParseError> {
        match &self.peek().tok {
            Tok::Ident(s) if s == kw => Ok(self.advance()),
            _ => Err(self.unexpected(&[&format!("\"{kw}\"")])),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn ident(&mut self) -> Result<(String, SourceSpan), ParseError> {
        match &self.peek().tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                let t = self.advance();
                Ok((s, t.span))
            }
            _ => Err(self.unexpected(&["identifier"])),
        }
    }

    fn node(&mut self) -> Result<(NodeId, SourceSpan), ParseError> {
        let (name, span) = self.ident()?;
        let id = NodeId::new(name).map_err(|e| ParseError::new(span, e.to_string(), &["identifier"]))?;
        Ok((id, span))
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        match &self.peek().tok {
            Tok::Str(s) => {
                let l = Literal::Str(s.clone());
                self.advance();
                Ok(l)
            }
            Tok::Int(i) => {
                let l = Literal::Int(*i);
                self.advance();
                Ok(l)
            }
            _ => Err(self.unexpected(&["string literal", "integer literal"])),
        }
    }
}

struct Spans {
    nodes: Vec<SourceSpan>,
    channels: Vec<SourceSpan>,
}

/// Parses connector text. Success implies the connector passes `validate`.
pub fn parse(text: &str) -> Result<Connector, ParseError> {
    let tokens = Lexer::new(text).tokenize()?;
    let mut p = Parser { tokens, pos: 0 };

    p.keyword("connector")?;
    let (name, _) = p.ident()?;
    p.expect(Tok::LBrace, "`{`")?;

    let mut connector = Connector::new(name);
    let mut spans = Spans {
        nodes: Vec::new(),
        channels: Vec::new(),
    };

    p.keyword("nodes")?;
    p.expect(Tok::LBrace, "`{`")?;
    loop {
        let visibility = if p.at_keyword("boundary") {
            Visibility::Boundary
        } else if p.at_keyword("internal") {
            Visibility::Internal
        } else {
            return Err(p.unexpected(&["\"boundary\"", "\"internal\""]));
        };
        p.advance();
        let mut count = 0;
        while let Tok::Ident(s) = &p.peek().tok {
            if KEYWORDS.contains(&s.as_str()) {
                break;
            }
            let (id, span) = p.node()?;
            if connector.nodes.iter().any(|d| d.id == id) {
                return Err(ParseError::new(
                    span,
                    format!("duplicate node declaration {id}"),
                    &[],
                ));
            }
            connector.nodes.push(NodeDecl { id, visibility });
            spans.nodes.push(span);
            count += 1;
        }
        if count == 0 {
            return Err(p.unexpected(&["identifier"]));
        }
        match p.peek().tok {
            Tok::Comma => {
                p.advance();
            }
            Tok::Semi => {
                p.advance();
                p.expect(Tok::RBrace, "`}`")?;
                break;
            }
            Tok::RBrace => {
                p.advance();
                break;
            }
            _ => return Err(p.unexpected(&["`,`", "`;`", "`}`", "identifier"])),
        }
    }

    p.keyword("channels")?;
    p.expect(Tok::LBrace, "`{`")?;
    while p.peek().tok != Tok::RBrace {
        let start = p.peek().span;
        let kind = match &p.peek().tok {
            Tok::Ident(k) if k == "sync" => {
                p.advance();
                ChannelKind::Sync
            }
            Tok::Ident(k) if k == "fifo1" => {
                p.advance();
                let initial = if p.at_keyword("init") {
                    p.advance();
                    Some(p.literal()?)
                } else {
                    None
                };
                ChannelKind::Fifo1 { initial }
            }
            Tok::Ident(k) if k == "syncdrain" => {
                p.advance();
                ChannelKind::SyncDrain
            }
            Tok::Ident(k) if k == "filter" => {
                p.advance();
                p.expect(Tok::LParen, "`(`")?;
                let negated = match p.peek().tok {
                    Tok::Eq => false,
                    Tok::NotEq => true,
                    _ => return Err(p.unexpected(&["`=`", "`!=`"])),
                };
                p.advance();
                let lit = p.literal()?;
                p.expect(Tok::RParen, "`)`")?;
                ChannelKind::Filter(if negated {
                    FilterConstraint::NotEquals(lit)
                } else {
                    FilterConstraint::Equals(lit)
                })
            }
            _ => {
                return Err(p.unexpected(&[
                    "\"sync\"",
                    "\"fifo1\"",
                    "\"syncdrain\"",
                    "\"filter\"",
                    "`}`",
                ]))
            }
        };
        let (from, _) = p.node()?;
        if kind.is_directed() {
            p.expect(Tok::Arrow, "`->`")?;
        }
        let (to, _) = p.node()?;
        p.expect(Tok::Semi, "`;`")?;
        spans.channels.push(start);
        let id = channel_id(connector.channels.len());
        connector.channels.push(Channel {
            id,
            kind,
            ends: (from, to),
        });
    }
    p.expect(Tok::RBrace, "`}`")?;
    p.expect(Tok::RBrace, "`}`")?;
    p.expect(Tok::Eof, "end of input")?;

    if let Some(v) = validate(&connector).violations.into_iter().next() {
        let span = violation_span(&connector, &spans, &v);
        return Err(ParseError::new(span, v.to_string(), &[]));
    }
    Ok(connector)
}

fn violation_span(connector: &Connector, spans: &Spans, v: &Violation) -> SourceSpan {
    let by_channel = |id: &str| {
        connector
            .channels
            .iter()
            .position(|c| c.id == id)
            .map(|i| spans.channels[i])
    };
    let by_node = |n: &NodeId| {
        connector
            .nodes
            .iter()
            .position(|d| &d.id == n)
            .map(|i| spans.nodes[i])
    };
    let fallback = SourceSpan { line: 1, column: 1, length: 0 };
    match v {
        Violation::DuplicateNode(n) | Violation::UnconnectedNode(n) | Violation::MixedBoundary(n) => {
            by_node(n)
        }
        Violation::DuplicateChannel(c)
        | Violation::UndeclaredNode { channel: c, .. }
        | Violation::DrainLoop { channel: c, .. } => by_channel(c),
    }
    .unwrap_or(fallback)
}

/// Parses raw bytes, rejecting invalid UTF-8 with a positioned error.
pub fn parse_bytes(bytes: &[u8]) -> Result<Connector, ParseError> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse(text),
        Err(e) => {
            let valid = std::str::from_utf8(&bytes[..e.valid_up_to()]).unwrap_or_default();
            let line = valid.matches('\n').count() + 1;
            let column = valid.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
            Err(ParseError::new(
                SourceSpan { line, column, length: 1 },
                "input is not valid UTF-8",
                &[],
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot render invalid connector {name}: {report}")]
pub struct RenderError {
    pub name: String,
    pub report: crate::connector::ValidationReport,
}

/// Renders a valid connector. Node declarations keep their order; runs of
/// equal visibility share one declaration.
pub fn render(connector: &Connector) -> Result<String, RenderError> {
    let report = validate(connector);
    if !report.is_valid() {
        return Err(RenderError {
            name: connector.name.clone(),
            report,
        });
    }
    let mut out = String::new();
    let _ = writeln!(out, "connector {} {{", connector.name);

    let mut groups: Vec<(Visibility, Vec<&NodeId>)> = Vec::new();
    for d in &connector.nodes {
        match groups.last_mut() {
            Some((v, ids)) if *v == d.visibility => ids.push(&d.id),
            _ => groups.push((d.visibility, vec![&d.id])),
        }
    }
    let decls: Vec<String> = groups
        .iter()
        .map(|(v, ids)| {
            let names: Vec<&str> = ids.iter().map(|i| i.as_str()).collect();
            format!("{} {}", v.keyword(), names.join(" "))
        })
        .collect();
    let _ = writeln!(out, "  nodes {{ {} }}", decls.join(", "));

    out.push_str("  channels {\n");
    for ch in &connector.channels {
        let (a, b) = (&ch.ends.0, &ch.ends.1);
        let line = match &ch.kind {
            ChannelKind::Sync => format!("sync {a} -> {b}"),
            ChannelKind::Fifo1 { initial: None } => format!("fifo1 {a} -> {b}"),
            ChannelKind::Fifo1 { initial: Some(l) } => format!("fifo1 init {l} {a} -> {b}"),
            ChannelKind::SyncDrain => format!("syncdrain {a} {b}"),
            ChannelKind::Filter(FilterConstraint::Equals(l)) => format!("filter(= {l}) {a} -> {b}"),
            ChannelKind::Filter(FilterConstraint::NotEquals(l)) => {
                format!("filter(!= {l}) {a} -> {b}")
            }
        };
        let _ = writeln!(out, "    {line};");
    }
    out.push_str("  }\n}\n");
    Ok(out)
}
