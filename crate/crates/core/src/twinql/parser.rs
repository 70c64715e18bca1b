//! Lexer and recursive-descent parser for TwinQL. The grammar is published in
//! `docs/twinql.md`.

use thiserror::Error;

use super::ast::{Arg, BinaryOp, Expr, ExprKind, Pos, UnaryOp};

/// Maximum height of a parsed expression tree.
pub const MAX_DEPTH: usize = 32;
// Parenthesised groups recurse without adding tree height.
const MAX_RECURSION: usize = 2 * MAX_DEPTH;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at line {line}, column {col}: expected {expected}")]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Float(f64),
    Str(String),
    Ident(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Eof,
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Int(v) => format!("integer {v}"),
        Tok::Float(v) => format!("number {v}"),
        Tok::Str(_) => "string".into(),
        Tok::Ident(name) => format!("`{name}`"),
        Tok::Eof => "end of input".into(),
        other => format!("{other:?}"),
    }
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            chars: src.char_indices().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|(_, c)| *c)
    }

    fn err(&self, pos: Pos, expected: &str) -> SyntaxError {
        SyntaxError {
            line: pos.line,
            col: pos.col,
            expected: expected.to_string(),
        }
    }

    fn tokens(mut self) -> Result<Vec<(Tok, Pos)>, SyntaxError> {
        let mut out = Vec::new();
        loop {
            while let Some(c) = self.peek() {
                if c == '#' {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                } else if c.is_whitespace() {
                    self.bump();
                } else {
                    break;
                }
            }
            let pos = Pos {
                line: self.line,
                col: self.col,
            };
            let Some(c) = self.bump() else {
                out.push((Tok::Eof, pos));
                return Ok(out);
            };
            let tok = match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '[' => Tok::LBracket,
                ']' => Tok::RBracket,
                ',' => Tok::Comma,
                ':' => Tok::Colon,
                '+' => Tok::Plus,
                '-' => Tok::Minus,
                '*' => Tok::Star,
                '/' => Tok::Slash,
                '%' => Tok::Percent,
                '=' if self.peek() == Some('=') => {
                    self.bump();
                    Tok::EqEq
                }
                '=' => Tok::Assign,
                '!' if self.peek() == Some('=') => {
                    self.bump();
                    Tok::NotEq
                }
                '<' if self.peek() == Some('=') => {
                    self.bump();
                    Tok::Le
                }
                '<' => Tok::Lt,
                '>' if self.peek() == Some('=') => {
                    self.bump();
                    Tok::Ge
                }
                '>' => Tok::Gt,
                '"' | '\'' => self.string(c, pos)?,
                c if c.is_ascii_digit() || (c == '.' && self.peek().is_some_and(|d| d.is_ascii_digit())) => {
                    self.number(c, pos)?
                }
                c if c.is_alphabetic() || c == '_' => {
                    let mut name = String::from(c);
                    while let Some(c) = self.peek().filter(|c| c.is_alphanumeric() || *c == '_') {
                        name.push(c);
                        self.bump();
                    }
                    Tok::Ident(name)
                }
                _ => return Err(self.err(pos, "an expression")),
            };
            out.push((tok, pos));
        }
    }

    fn string(&mut self, quote: char, start: Pos) -> Result<Tok, SyntaxError> {
        let mut text = String::new();
        loop {
            match self.bump() {
                None => {
                    return Err(self.err(
                        Pos {
                            line: self.line,
                            col: self.col,
                        },
                        &format!("closing {quote}"),
                    ))
                }
                Some(c) if c == quote => return Ok(Tok::Str(text)),
                Some('\\') => match self.bump() {
                    Some('n') => text.push('\n'),
                    Some('t') => text.push('\t'),
                    Some(c @ ('\\' | '"' | '\'')) => text.push(c),
                    _ => return Err(self.err(start, "a valid escape sequence")),
                },
                Some(c) => text.push(c),
            }
        }
    }

    fn number(&mut self, first: char, pos: Pos) -> Result<Tok, SyntaxError> {
        let mut text = String::from(first);
        let mut is_float = first == '.';
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                text.push(c);
            } else if c == '.' && !is_float {
                is_float = true;
                text.push(c);
            } else if (c == 'e' || c == 'E') && !text.contains(['e', 'E']) {
                is_float = true;
                text.push(c);
                self.bump();
                if let Some(sign) = self.peek().filter(|c| *c == '+' || *c == '-') {
                    text.push(sign);
                    self.bump();
                }
                continue;
            } else {
                break;
            }
            self.bump();
        }
        if is_float {
            text.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Tok::Float)
                .ok_or_else(|| self.err(pos, "a number"))
        } else {
            text.parse::<i64>()
                .map(Tok::Int)
                .map_err(|_| self.err(pos, "an integer within 64 bits"))
        }
    }
}

struct Parser {
    tokens: Vec<(Tok, Pos)>,
    at: usize,
    nesting: usize,
}

fn node(kind: ExprKind, pos: Pos, children: &[&Expr]) -> Result<Expr, SyntaxError> {
    let depth = 1 + children.iter().map(|c| c.depth).max().unwrap_or(0);
    if depth > MAX_DEPTH {
        return Err(SyntaxError {
            line: pos.line,
            col: pos.col,
            expected: format!("an expression nested at most {MAX_DEPTH} deep"),
        });
    }
    Ok(Expr { kind, pos, depth })
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].0
    }

    fn pos(&self) -> Pos {
        self.tokens[self.at].1
    }

    fn advance(&mut self) -> (Tok, Pos) {
        let tok = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        tok
    }

    fn error(&self, expected: &str) -> SyntaxError {
        let pos = self.pos();
        SyntaxError {
            line: pos.line,
            col: pos.col,
            expected: format!("{expected}, found {}", describe(self.peek())),
        }
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), SyntaxError> {
        if *self.peek() == tok {
            self.advance();
            Ok(())
        } else {
            Err(self.error(expected))
        }
    }

    fn keyword(&self, word: &str) -> bool {
        matches!(self.peek(), Tok::Ident(name) if name == word)
    }

    fn ident(&mut self, expected: &str) -> Result<String, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(name) if !is_reserved(&name) => {
                self.advance();
                Ok(name)
            }
            _ => Err(self.error(expected)),
        }
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        self.nesting += 1;
        if self.nesting > MAX_RECURSION {
            return Err(self.error(&format!("an expression nested at most {MAX_DEPTH} deep")));
        }
        let result = if self.keyword("lambda") {
            let pos = self.advance().1;
            let param = self.ident("a parameter name")?;
            self.expect(Tok::Colon, "':'")?;
            let body = self.expr()?;
            node(
                ExprKind::Lambda {
                    param,
                    body: Box::new(body.clone()),
                },
                pos,
                &[&body],
            )
        } else {
            self.or_expr()
        };
        self.nesting -= 1;
        result
    }

    fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Result<Expr, SyntaxError> {
        let pos = lhs.pos;
        let depth_probe = [&lhs, &rhs].map(|e| e.depth);
        let depth = 1 + depth_probe[0].max(depth_probe[1]);
        if depth > MAX_DEPTH {
            return Err(SyntaxError {
                line: pos.line,
                col: pos.col,
                expected: format!("an expression nested at most {MAX_DEPTH} deep"),
            });
        }
        Ok(Expr {
            kind: ExprKind::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            },
            pos,
            depth,
        })
    }

    fn or_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.and_expr()?;
        while self.keyword("or") {
            self.advance();
            let rhs = self.and_expr()?;
            lhs = Self::binary(BinaryOp::Or, lhs, rhs)?;
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.not_expr()?;
        while self.keyword("and") {
            self.advance();
            let rhs = self.not_expr()?;
            lhs = Self::binary(BinaryOp::And, lhs, rhs)?;
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, SyntaxError> {
        if self.keyword("not") {
            let pos = self.advance().1;
            self.nesting += 1;
            if self.nesting > MAX_RECURSION {
                return Err(self.error(&format!("an expression nested at most {MAX_DEPTH} deep")));
            }
            let operand = self.not_expr()?;
            self.nesting -= 1;
            let n = node(
                ExprKind::Unary {
                    op: UnaryOp::Not,
                    operand: Box::new(operand.clone()),
                },
                pos,
                &[&operand],
            );
            return n;
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, SyntaxError> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Tok::EqEq => BinaryOp::Eq,
            Tok::NotEq => BinaryOp::Ne,
            Tok::Lt => BinaryOp::Lt,
            Tok::Le => BinaryOp::Le,
            Tok::Gt => BinaryOp::Gt,
            Tok::Ge => BinaryOp::Ge,
            _ => return Ok(lhs),
        };
        self.advance();
        let rhs = self.additive()?;
        Self::binary(op, lhs, rhs)
    }

    fn additive(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.term()?;
            lhs = Self::binary(op, lhs, rhs)?;
        }
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                Tok::Percent => BinaryOp::Rem,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.unary()?;
            lhs = Self::binary(op, lhs, rhs)?;
        }
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if *self.peek() == Tok::Minus {
            let pos = self.advance().1;
            self.nesting += 1;
            if self.nesting > MAX_RECURSION {
                return Err(self.error(&format!("an expression nested at most {MAX_DEPTH} deep")));
            }
            let operand = self.unary()?;
            self.nesting -= 1;
            return node(
                ExprKind::Unary {
                    op: UnaryOp::Neg,
                    operand: Box::new(operand.clone()),
                },
                pos,
                &[&operand],
            );
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, SyntaxError> {
        let mut target = self.primary()?;
        while *self.peek() == Tok::LBracket {
            self.advance();
            let index = self.expr()?;
            self.expect(Tok::RBracket, "']'")?;
            let pos = target.pos;
            let depth = 1 + target.depth.max(index.depth);
            if depth > MAX_DEPTH {
                return Err(SyntaxError {
                    line: pos.line,
                    col: pos.col,
                    expected: format!("an expression nested at most {MAX_DEPTH} deep"),
                });
            }
            target = Expr {
                kind: ExprKind::Index {
                    target: Box::new(target),
                    index: Box::new(index),
                },
                pos,
                depth,
            };
        }
        Ok(target)
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.advance();
                node(ExprKind::Int(v), pos, &[])
            }
            Tok::Float(v) => {
                self.advance();
                node(ExprKind::Float(v), pos, &[])
            }
            Tok::Str(s) => {
                self.advance();
                node(ExprKind::Str(s), pos, &[])
            }
            Tok::LParen => {
                self.advance();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Tok::LBracket => self.list(pos),
            Tok::Ident(name) => match name.as_str() {
                "true" | "True" => {
                    self.advance();
                    node(ExprKind::Bool(true), pos, &[])
                }
                "false" | "False" => {
                    self.advance();
                    node(ExprKind::Bool(false), pos, &[])
                }
                _ if is_reserved(&name) => Err(self.error("an expression")),
                _ => {
                    self.advance();
                    if *self.peek() == Tok::LParen {
                        self.advance();
                        self.call(name, pos)
                    } else {
                        node(ExprKind::Ident(name), pos, &[])
                    }
                }
            },
            _ => Err(self.error("an expression")),
        }
    }

    fn call(&mut self, name: String, pos: Pos) -> Result<Expr, SyntaxError> {
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let keyword = match (self.peek().clone(), self.tokens.get(self.at + 1).map(|t| &t.0)) {
                    (Tok::Ident(key), Some(Tok::Assign)) if !is_reserved(&key) => {
                        self.advance();
                        self.advance();
                        Some(key)
                    }
                    _ => None,
                };
                let value = self.expr()?;
                args.push(Arg { name: keyword, value });
                if *self.peek() == Tok::Comma {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        if *self.peek() != Tok::RParen {
            return Err(self.error("')'"));
        }
        self.advance();
        let children: Vec<&Expr> = args.iter().map(|a| &a.value).collect();
        let depth = 1 + children.iter().map(|c| c.depth).max().unwrap_or(0);
        if depth > MAX_DEPTH {
            return Err(SyntaxError {
                line: pos.line,
                col: pos.col,
                expected: format!("an expression nested at most {MAX_DEPTH} deep"),
            });
        }
        Ok(Expr {
            kind: ExprKind::Call { name, args },
            pos,
            depth,
        })
    }

    fn list(&mut self, pos: Pos) -> Result<Expr, SyntaxError> {
        self.advance();
        if *self.peek() == Tok::RBracket {
            self.advance();
            return node(ExprKind::List(Vec::new()), pos, &[]);
        }
        let first = self.expr()?;
        if self.keyword("for") {
            self.advance();
            let var = self.ident("a loop variable")?;
            if !self.keyword("in") {
                return Err(self.error("`in`"));
            }
            self.advance();
            let source = self.expr()?;
            let condition = if self.keyword("if") {
                self.advance();
                Some(self.expr()?)
            } else {
                None
            };
            self.expect(Tok::RBracket, "']'")?;
            let mut children = vec![&first, &source];
            children.extend(condition.as_ref());
            let depth = 1 + children.iter().map(|c| c.depth).max().unwrap_or(0);
            let kind = ExprKind::Comprehension {
                element: Box::new(first.clone()),
                var,
                source: Box::new(source.clone()),
                condition: condition.clone().map(Box::new),
            };
            return node_with_depth(kind, pos, depth);
        }
        let mut items = vec![first];
        while *self.peek() == Tok::Comma {
            self.advance();
            if *self.peek() == Tok::RBracket {
                break;
            }
            items.push(self.expr()?);
        }
        self.expect(Tok::RBracket, "',' or ']'")?;
        let depth = 1 + items.iter().map(|c| c.depth).max().unwrap_or(0);
        node_with_depth(ExprKind::List(items), pos, depth)
    }
}

fn node_with_depth(kind: ExprKind, pos: Pos, depth: usize) -> Result<Expr, SyntaxError> {
    if depth > MAX_DEPTH {
        return Err(SyntaxError {
            line: pos.line,
            col: pos.col,
            expected: format!("an expression nested at most {MAX_DEPTH} deep"),
        });
    }
    Ok(Expr { kind, pos, depth })
}

fn is_reserved(word: &str) -> bool {
    matches!(
        word,
        "and" | "or" | "not" | "for" | "in" | "if" | "lambda" | "true" | "false" | "True" | "False"
    )
}

/// Parses a whole program (a single expression).
pub fn parse_program(source: &str) -> Result<Expr, SyntaxError> {
    let tokens = Lexer::new(source).tokens()?;
    let mut parser = Parser {
        tokens,
        at: 0,
        nesting: 0,
    };
    let expr = parser.expr()?;
    if *parser.peek() != Tok::Eof {
        return Err(parser.error("end of input"));
    }
    Ok(expr)
}
