//! Logical query language: tokenizer, recursive-descent parser and renderer.
//!
//! Grammar, with precedence `NOT` > `AND` > `OR` and parentheses overriding:
//!
//! ```text
//! or   := and ("OR" and)*
//! and  := not ("AND" not)*
//! not  := "NOT" atom | atom
//! atom := TERM | "(" or ")"
//! ```
//!
//! Repeated applications of the same operator flatten into one n-ary node.
//! Keywords are case-sensitive. A term is either a double-quoted string
//! (with `\"` and `\\` escapes) or a run of bare words, which merge into one
//! term.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("unterminated quote starting at byte {position}")]
    UnterminatedQuote { position: usize },
    #[error("empty term at byte {position}")]
    EmptyTerm { position: usize },
    #[error("syntax error at byte {position}: expected {}", .expected.join(" or "))]
    Syntax {
        position: usize,
        expected: Vec<&'static str>,
    },
}

impl QueryError {
    /// Byte offset into the source the error points at.
    pub fn position(&self) -> usize {
        match self {
            QueryError::UnterminatedQuote { position }
            | QueryError::EmptyTerm { position }
            | QueryError::Syntax { position, .. } => *position,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Term,
    And,
    Or,
    Not,
    LParen,
    RParen,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    /// Unquoted term content; empty for non-term tokens.
    pub text: String,
    /// Half-open byte range in the source.
    pub span: (usize, usize),
}

impl Token {
    fn punct(kind: TokenKind, start: usize, end: usize) -> Self {
        Token {
            kind,
            text: String::new(),
            span: (start, end),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum QueryExpr {
    Term(String),
    Not(Box<QueryExpr>),
    And(Vec<QueryExpr>),
    Or(Vec<QueryExpr>),
}

impl QueryExpr {
    pub fn term(text: impl Into<String>) -> Self {
        QueryExpr::Term(text.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(child: QueryExpr) -> Self {
        QueryExpr::Not(Box::new(child))
    }

    /// Builds a conjunction, splicing in children that are themselves
    /// conjunctions. A single child is returned unchanged.
    ///
    /// # Panics
    /// If `children` is empty.
    pub fn and(children: impl IntoIterator<Item = QueryExpr>) -> Self {
        Self::nary(children, true)
    }

    /// Disjunction counterpart of [`QueryExpr::and`].
    pub fn or(children: impl IntoIterator<Item = QueryExpr>) -> Self {
        Self::nary(children, false)
    }

    fn nary(children: impl IntoIterator<Item = QueryExpr>, is_and: bool) -> Self {
        let mut flat = Vec::new();
        for child in children {
            match (child, is_and) {
                (QueryExpr::And(inner), true) | (QueryExpr::Or(inner), false) => {
                    flat.extend(inner)
                }
                (other, _) => flat.push(other),
            }
        }
        assert!(!flat.is_empty(), "n-ary node needs at least one child");
        if flat.len() == 1 {
            return flat.pop().unwrap();
        }
        if is_and {
            QueryExpr::And(flat)
        } else {
            QueryExpr::Or(flat)
        }
    }

    /// Number of `Not` nodes in the tree.
    pub fn negation_count(&self) -> usize {
        match self {
            QueryExpr::Term(_) => 0,
            QueryExpr::Not(child) => 1 + child.negation_count(),
            QueryExpr::And(children) | QueryExpr::Or(children) => {
                children.iter().map(QueryExpr::negation_count).sum()
            }
        }
    }

    /// Checks the structural invariants: n-ary nodes have at least two
    /// children, no same-operator nesting, and no empty terms.
    pub fn is_well_formed(&self) -> bool {
        match self {
            QueryExpr::Term(t) => !t.trim().is_empty(),
            QueryExpr::Not(child) => child.is_well_formed(),
            QueryExpr::And(children) => {
                children.len() >= 2
                    && children
                        .iter()
                        .all(|c| !matches!(c, QueryExpr::And(_)) && c.is_well_formed())
            }
            QueryExpr::Or(children) => {
                children.len() >= 2
                    && children
                        .iter()
                        .all(|c| !matches!(c, QueryExpr::Or(_)) && c.is_well_formed())
            }
        }
    }
}

impl fmt::Display for QueryExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self))
    }
}

impl std::str::FromStr for QueryExpr {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_str(s)
    }
}

fn is_word_char(c: char) -> bool {
    !c.is_whitespace() && c != '(' && c != ')' && c != '"'
}

pub fn tokenize(input: &str) -> Result<Vec<Token>, QueryError> {
    let mut tokens = Vec::new();
    // Open run of merged bare words: (start, end).
    let mut run: Option<(usize, usize)> = None;
    let mut chars = input.char_indices().peekable();

    fn flush(run: &mut Option<(usize, usize)>, input: &str, tokens: &mut Vec<Token>) {
        if let Some((start, end)) = run.take() {
            tokens.push(Token {
                kind: TokenKind::Term,
                text: input[start..end].to_string(),
                span: (start, end),
            });
        }
    }

    while let Some(&(pos, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        match c {
            '(' | ')' => {
                flush(&mut run, input, &mut tokens);
                chars.next();
                let kind = if c == '(' {
                    TokenKind::LParen
                } else {
                    TokenKind::RParen
                };
                tokens.push(Token::punct(kind, pos, pos + 1));
            }
            '"' => {
                flush(&mut run, input, &mut tokens);
                chars.next();
                let mut text = String::new();
                let mut end = None;
                while let Some((i, ch)) = chars.next() {
                    match ch {
                        '"' => {
                            end = Some(i + 1);
                            break;
                        }
                        '\\' => match chars.peek() {
                            Some(&(_, next @ ('"' | '\\'))) => {
                                text.push(next);
                                chars.next();
                            }
                            _ => text.push('\\'),
                        },
                        other => text.push(other),
                    }
                }
                let end = end.ok_or(QueryError::UnterminatedQuote { position: pos })?;
                if text.trim().is_empty() {
                    return Err(QueryError::EmptyTerm { position: pos });
                }
                tokens.push(Token {
                    kind: TokenKind::Term,
                    text,
                    span: (pos, end),
                });
            }
            _ => {
                let start = pos;
                let mut end = pos;
                while let Some(&(i, ch)) = chars.peek() {
                    if !is_word_char(ch) {
                        break;
                    }
                    end = i + ch.len_utf8();
                    chars.next();
                }
                let keyword = match &input[start..end] {
                    "AND" => Some(TokenKind::And),
                    "OR" => Some(TokenKind::Or),
                    "NOT" => Some(TokenKind::Not),
                    _ => None,
                };
                match keyword {
                    Some(kind) => {
                        flush(&mut run, input, &mut tokens);
                        tokens.push(Token::punct(kind, start, end));
                    }
                    None => {
                        run = Some(match run {
                            Some((s, _)) => (s, end),
                            None => (start, end),
                        });
                    }
                }
            }
        }
    }
    flush(&mut run, input, &mut tokens);
    Ok(tokens)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    /// Byte offset reported for errors at end of input.
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.end, |t| t.span.0)
    }

    fn eat(&mut self, kind: TokenKind) -> bool {
        if self.peek().is_some_and(|t| t.kind == kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn error(&self, expected: Vec<&'static str>) -> QueryError {
        QueryError::Syntax {
            position: self.here(),
            expected,
        }
    }

    fn or_expr(&mut self) -> Result<QueryExpr, QueryError> {
        let mut children = vec![self.and_expr()?];
        while self.eat(TokenKind::Or) {
            children.push(self.and_expr()?);
        }
        Ok(QueryExpr::or(children))
    }

    fn and_expr(&mut self) -> Result<QueryExpr, QueryError> {
        let mut children = vec![self.not_expr()?];
        while self.eat(TokenKind::And) {
            children.push(self.not_expr()?);
        }
        Ok(QueryExpr::and(children))
    }

    fn not_expr(&mut self) -> Result<QueryExpr, QueryError> {
        if self.eat(TokenKind::Not) {
            Ok(QueryExpr::not(self.atom()?))
        } else {
            self.atom()
        }
    }

    fn atom(&mut self) -> Result<QueryExpr, QueryError> {
        match self.peek() {
            Some(tok) if tok.kind == TokenKind::Term => {
                self.pos += 1;
                Ok(QueryExpr::Term(tok.text.clone()))
            }
            Some(tok) if tok.kind == TokenKind::LParen => {
                self.pos += 1;
                let inner = self.or_expr()?;
                if !self.eat(TokenKind::RParen) {
                    return Err(self.error(vec!["AND", "OR", "')'"]));
                }
                Ok(inner)
            }
            _ => Err(self.error(vec!["term", "'('"])),
        }
    }
}

/// Parses a token sequence. `source_len` is used as the error position when
/// input ends early; pass the length of the tokenized string.
pub fn parse(tokens: &[Token], source_len: usize) -> Result<QueryExpr, QueryError> {
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: source_len,
    };
    let expr = parser.or_expr()?;
    if parser.peek().is_some() {
        return Err(parser.error(vec!["AND", "OR", "end of input"]));
    }
    Ok(expr)
}

pub fn parse_str(input: &str) -> Result<QueryExpr, QueryError> {
    let tokens = tokenize(input)?;
    parse(&tokens, input.len())
}

fn quote(text: &str, out: &mut String) {
    out.push('"');
    for c in text.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
}

/// Canonical text: every term quoted, parentheses only where precedence
/// requires them.
pub fn render(expr: &QueryExpr) -> String {
    let mut out = String::new();
    render_into(expr, &mut out);
    out
}

fn render_into(expr: &QueryExpr, out: &mut String) {
    match expr {
        QueryExpr::Term(t) => quote(t, out),
        QueryExpr::Not(child) => {
            out.push_str("NOT ");
            render_operand(child, out, |e| !matches!(e, QueryExpr::Term(_)));
        }
        QueryExpr::And(children) => {
            for (i, child) in children.iter().enumerate() {
                if i > 0 {
                    out.push_str(" AND ");
                }
                render_operand(child, out, |e| {
                    matches!(e, QueryExpr::Or(_) | QueryExpr::And(_))
                });
            }
        }
        QueryExpr::Or(children) => {
            for (i, child) in children.iter().enumerate() {
                if i > 0 {
                    out.push_str(" OR ");
                }
                render_operand(child, out, |e| matches!(e, QueryExpr::Or(_)));
            }
        }
    }
}

fn render_operand(expr: &QueryExpr, out: &mut String, needs_parens: impl Fn(&QueryExpr) -> bool) {
    if needs_parens(expr) {
        out.push('(');
        render_into(expr, out);
        out.push(')');
    } else {
        render_into(expr, out);
    }
}

/// Unique term strings in left-to-right first-occurrence order.
pub fn terms(expr: &QueryExpr) -> Vec<String> {
    fn walk<'a>(expr: &'a QueryExpr, seen: &mut Vec<&'a str>) {
        match expr {
            QueryExpr::Term(t) => {
                if !seen.contains(&t.as_str()) {
                    seen.push(t);
                }
            }
            QueryExpr::Not(child) => walk(child, seen),
            QueryExpr::And(children) | QueryExpr::Or(children) => {
                children.iter().for_each(|c| walk(c, seen))
            }
        }
    }
    let mut seen = Vec::new();
    walk(expr, &mut seen);
    seen.into_iter().map(str::to_string).collect()
}

/// Splits a query file into `(qid, query text)` pairs. Each non-blank line
/// is a query, optionally prefixed by `qid<TAB>`; unprefixed lines get the
/// id `q<line number>`.
pub fn read_query_lines(text: &str) -> Vec<(String, String)> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| match line.split_once('\t') {
            Some((qid, query)) => (qid.trim().to_string(), query.trim().to_string()),
            None => (format!("q{}", i + 1), line.trim().to_string()),
        })
        .collect()
}
