//! Lexer, parser and printer for the S-expression plan language.
//!
//! The grammar is deliberately tiny: parentheses delimit lists and every
//! other maximal run of non-whitespace characters is an atom. Keyword atoms
//! such as `:roleName` and numeric atoms such as `-1.5` are ordinary atoms
//! here; typing happens in [`crate::model`].

use std::fmt;

use thiserror::Error;

/// 1-based line and column of a token in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Open,
    Close,
    Atom(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SexprError {
    #[error("unbalanced parenthesis at {span}")]
    UnbalancedParens { span: Span },
    #[error("unexpected end of input at {span}")]
    UnexpectedEof { span: Span },
}

impl SexprError {
    pub fn span(&self) -> Span {
        match self {
            SexprError::UnbalancedParens { span } | SexprError::UnexpectedEof { span } => *span,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Node {
    Atom(String),
    List(Vec<SExpr>),
}

/// A node of the generic syntax tree.
///
/// Equality is structural: source spans are ignored.
#[derive(Debug, Clone)]
pub struct SExpr {
    pub node: Node,
    pub span: Span,
}

impl PartialEq for SExpr {
    fn eq(&self, other: &Self) -> bool {
        match (&self.node, &other.node) {
            (Node::Atom(a), Node::Atom(b)) => a == b,
            (Node::List(a), Node::List(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for SExpr {}

impl SExpr {
    pub fn atom(text: impl Into<String>) -> Self {
        SExpr {
            node: Node::Atom(text.into()),
            span: Span::default(),
        }
    }

    pub fn list(children: Vec<SExpr>) -> Self {
        SExpr {
            node: Node::List(children),
            span: Span::default(),
        }
    }

    pub fn as_atom(&self) -> Option<&str> {
        match &self.node {
            Node::Atom(a) => Some(a),
            Node::List(_) => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match &self.node {
            Node::List(items) => Some(items),
            Node::Atom(_) => None,
        }
    }

    /// Head atom of a list form, e.g. `step` for `(step :id 0 ...)`.
    pub fn head(&self) -> Option<&str> {
        self.as_list()?.first()?.as_atom()
    }

    /// Value following the keyword atom `key` (given with its leading `:`)
    /// among this list's children.
    pub fn keyword(&self, key: &str) -> Option<&SExpr> {
        let items = self.as_list()?;
        items
            .iter()
            .position(|c| c.as_atom() == Some(key))
            .and_then(|i| items.get(i + 1))
    }
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Node::Atom(a) => f.write_str(a),
            Node::List(items) => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Serialize a tree back to text, lists space-separated on a single line.
pub fn serialize(expr: &SExpr) -> String {
    expr.to_string()
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut line = 1;
    let mut column = 1;
    let mut atom = String::new();
    let mut atom_span = Span::default();

    fn flush(atom: &mut String, span: Span, tokens: &mut Vec<Token>) {
        if !atom.is_empty() {
            tokens.push(Token {
                kind: TokenKind::Atom(std::mem::take(atom)),
                span,
            });
        }
    }

    for ch in text.chars() {
        let here = Span { line, column };
        match ch {
            '(' | ')' => {
                flush(&mut atom, atom_span, &mut tokens);
                let kind = if ch == '(' {
                    TokenKind::Open
                } else {
                    TokenKind::Close
                };
                tokens.push(Token { kind, span: here });
            }
            c if c.is_whitespace() => flush(&mut atom, atom_span, &mut tokens),
            c => {
                if atom.is_empty() {
                    atom_span = here;
                }
                atom.push(c);
            }
        }
        if ch == '\n' {
            line += 1;
            column = 1;
        } else {
            column += 1;
        }
    }
    flush(&mut atom, atom_span, &mut tokens);
    tokens
}

/// Build the tree for a token sequence.
///
/// A single top-level form is returned as is; several top-level forms are
/// wrapped in a synthetic root list. An empty sequence is an
/// `UnexpectedEof`.
pub fn parse(tokens: &[Token]) -> Result<SExpr, SexprError> {
    // stack of open lists: (span of the opening paren, children so far)
    let mut stack: Vec<(Span, Vec<SExpr>)> = Vec::new();
    let mut top: Vec<SExpr> = Vec::new();

    for token in tokens {
        match &token.kind {
            TokenKind::Open => stack.push((token.span, Vec::new())),
            TokenKind::Close => {
                let (span, children) = stack
                    .pop()
                    .ok_or(SexprError::UnbalancedParens { span: token.span })?;
                let node = SExpr {
                    node: Node::List(children),
                    span,
                };
                match stack.last_mut() {
                    Some((_, parent)) => parent.push(node),
                    None => top.push(node),
                }
            }
            TokenKind::Atom(text) => {
                let node = SExpr {
                    node: Node::Atom(text.clone()),
                    span: token.span,
                };
                match stack.last_mut() {
                    Some((_, parent)) => parent.push(node),
                    None => top.push(node),
                }
            }
        }
    }

    if let Some((span, _)) = stack.last() {
        let end = tokens.last().map(|t| t.span).unwrap_or(*span);
        return Err(SexprError::UnexpectedEof { span: end });
    }
    match top.len() {
        0 => Err(SexprError::UnexpectedEof {
            span: Span { line: 1, column: 1 },
        }),
        1 => Ok(top.pop().expect("one element")),
        _ => {
            let span = top[0].span;
            Ok(SExpr {
                node: Node::List(top),
                span,
            })
        }
    }
}

pub fn parse_str(text: &str) -> Result<SExpr, SexprError> {
    parse(&tokenize(text))
}
