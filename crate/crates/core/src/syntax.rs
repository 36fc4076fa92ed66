//! Shared lexer and expression grammar for model and monitor documents.
//!
//! Precedence, loosest first: `or`, `and`, comparisons, `+`/`-`, `*`,
//! then unary `not`/`-`/`abs(..)`.

use std::fmt;

use thiserror::Error;

use crate::expr::{Assignment, BinOp, Expr, UnOp, Value};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("syntax error at {line}:{col}: {msg}")]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Str(String),
    Int(i128),
    Sym(String),
    Punct(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Str(s) => write!(f, "\"{s}\""),
            Tok::Int(i) => write!(f, "`{i}`"),
            Tok::Sym(s) => write!(f, "`#{s}`"),
            Tok::Punct(p) => write!(f, "`{p}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

const PUNCTS: &[&str] = &[
    ":=", "->", "<=", ">=", "==", "!=", "{", "}", "(", ")", "[", "]", ";", ",", ":", "-", "+", "*", "<", ">", "/", "=",
    "^",
];

fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

fn is_ident_char(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

/// A name that can be written bare; anything else is rendered quoted.
pub fn is_bare_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if is_ident_start(c)) && chars.all(is_ident_char)
}

pub fn quote_name(s: &str) -> String {
    if is_bare_name(s) && !is_keyword(s) {
        s.to_string()
    } else {
        format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
    }
}

fn is_keyword(s: &str) -> bool {
    matches!(s, "and" | "or" | "not" | "abs" | "true" | "false")
}

pub fn lex(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, msg: String| SyntaxError { line, col, msg };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (tl, tc) = (line, col);
        if is_ident_start(c) {
            let start = i;
            loop {
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                // Qualified names: `Worker1.x`.
                if i + 1 < chars.len() && chars[i] == '.' && is_ident_start(chars[i + 1]) {
                    i += 1;
                    continue;
                }
                break;
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            out.push(Token {
                tok: Tok::Ident(s),
                line: tl,
                col: tc,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            let n: i128 = s
                .parse()
                .map_err(|_| err(tl, tc, format!("integer literal `{s}` out of range")))?;
            out.push(Token {
                tok: Tok::Int(n),
                line: tl,
                col: tc,
            });
            continue;
        }
        if c == '"' {
            let (name, used) = lex_string(&chars[i..]).ok_or_else(|| err(tl, tc, "unterminated string".into()))?;
            i += used;
            col += used;
            out.push(Token {
                tok: Tok::Str(name),
                line: tl,
                col: tc,
            });
            continue;
        }
        if c == '#' {
            i += 1;
            col += 1;
            let name = if chars.get(i) == Some(&'"') {
                let (name, used) = lex_string(&chars[i..]).ok_or_else(|| err(tl, tc, "unterminated string".into()))?;
                i += used;
                col += used;
                name
            } else {
                let start = i;
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                col += i - start;
                chars[start..i].iter().collect()
            };
            if name.is_empty() {
                return Err(err(tl, tc, "expected a location name after `#`".into()));
            }
            out.push(Token {
                tok: Tok::Sym(name),
                line: tl,
                col: tc,
            });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                i += p.len();
                col += p.len();
                out.push(Token {
                    tok: Tok::Punct(p),
                    line: tl,
                    col: tc,
                });
            }
            None => return Err(err(tl, tc, format!("unexpected character `{c}`"))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

/// Reads a `"..."` literal starting at `chars[0]`; returns the contents and
/// the number of chars consumed.
fn lex_string(chars: &[char]) -> Option<(String, usize)> {
    let mut s = String::new();
    let mut i = 1;
    loop {
        match chars.get(i)? {
            '\n' => return None,
            '"' => return Some((s, i + 1)),
            '\\' => {
                s.push(*chars.get(i + 1)?);
                i += 2;
            }
            ch => {
                s.push(*ch);
                i += 1;
            }
        }
    }
}

/// Cursor over a token stream with the expression grammar built in.
pub struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    pub fn new(src: &str) -> Result<Self, SyntaxError> {
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
        })
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    pub fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    pub fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    pub fn error(&self, msg: impl Into<String>) -> SyntaxError {
        let t = &self.toks[self.pos];
        SyntaxError {
            line: t.line,
            col: t.col,
            msg: msg.into(),
        }
    }

    pub fn unexpected(&self, wanted: &str) -> SyntaxError {
        self.error(format!("expected {wanted}, found {}", self.peek()))
    }

    pub fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    pub fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect_punct(&mut self, p: &str) -> Result<(), SyntaxError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{p}`")))
        }
    }

    pub fn is_keyword(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == k)
    }

    pub fn eat_keyword(&mut self, k: &str) -> bool {
        if self.is_keyword(k) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect_keyword(&mut self, k: &str) -> Result<(), SyntaxError> {
        if self.eat_keyword(k) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{k}`")))
        }
    }

    /// A bare identifier (possibly qualified) or a quoted name.
    pub fn name(&mut self) -> Result<String, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(s) | Tok::Str(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected("a name")),
        }
    }

    /// Comma-separated names up to (not including) `;`.
    pub fn name_list(&mut self) -> Result<Vec<String>, SyntaxError> {
        let mut out = Vec::new();
        if self.is_punct(";") {
            return Ok(out);
        }
        loop {
            out.push(self.name()?);
            if !self.eat_punct(",") {
                return Ok(out);
            }
        }
    }

    pub fn expr(&mut self) -> Result<Expr, SyntaxError> {
        self.binary(1)
    }

    fn peek_binop(&self) -> Option<BinOp> {
        Some(match self.peek() {
            Tok::Ident(s) if s == "or" => BinOp::Or,
            Tok::Ident(s) if s == "and" => BinOp::And,
            Tok::Punct("<") => BinOp::Lt,
            Tok::Punct("<=") => BinOp::Le,
            Tok::Punct("==") => BinOp::Eq,
            Tok::Punct("!=") => BinOp::Ne,
            Tok::Punct(">") => BinOp::Gt,
            Tok::Punct(">=") => BinOp::Ge,
            Tok::Punct("+") => BinOp::Add,
            Tok::Punct("-") => BinOp::Sub,
            Tok::Punct("*") => BinOp::Mul,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek_binop() {
            let p = op.precedence();
            if p < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(p + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
            if p == 3 && self.peek_binop().is_some_and(|o| o.precedence() == 3) {
                return Err(self.error("comparisons do not chain; add parentheses"));
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.eat_keyword("not") {
            return Ok(!self.unary()?);
        }
        if self.is_punct("-") {
            if let Tok::Int(n) = self.peek_at(1).clone() {
                self.bump();
                self.bump();
                let v = i64::try_from(-n).map_err(|_| self.error("integer literal out of range"))?;
                return Ok(Expr::int(v));
            }
            self.bump();
            return Ok(Expr::Unary(UnOp::Neg, Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                let v = i64::try_from(n).map_err(|_| self.error("integer literal out of range"))?;
                Ok(Expr::int(v))
            }
            Tok::Sym(s) => {
                self.bump();
                Ok(Expr::sym(s))
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Ident(s) => match s.as_str() {
                "true" | "false" => {
                    self.bump();
                    Ok(Expr::Lit(Value::Bool(s == "true")))
                }
                "abs" => {
                    self.bump();
                    self.expect_punct("(")?;
                    let e = self.expr()?;
                    self.expect_punct(")")?;
                    Ok(Expr::abs(e))
                }
                "and" | "or" | "not" => Err(self.unexpected("an expression")),
                _ => {
                    self.bump();
                    Ok(Expr::Var(s))
                }
            },
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Var(s))
            }
            _ => Err(self.unexpected("an expression")),
        }
    }

    /// `target := expr`
    pub fn assignment(&mut self) -> Result<Assignment, SyntaxError> {
        let target = self.name()?;
        self.expect_punct(":=")?;
        Ok(Assignment::new(target, self.expr()?))
    }

    /// `[a1; a2; ...]`, possibly empty.
    pub fn assignment_block(&mut self) -> Result<Vec<Assignment>, SyntaxError> {
        self.expect_punct("[")?;
        let mut out = Vec::new();
        while !self.eat_punct("]") {
            out.push(self.assignment()?);
            if !self.eat_punct(";") && !self.is_punct("]") {
                return Err(self.unexpected("`;` or `]`"));
            }
        }
        Ok(out)
    }
}

pub fn parse_expr(src: &str) -> Result<Expr, SyntaxError> {
    let mut p = Parser::new(src)?;
    let e = p.expr()?;
    if !p.at_eof() {
        return Err(p.unexpected("end of expression"));
    }
    Ok(e)
}

pub fn render_assignments(f: &[Assignment]) -> String {
    let parts: Vec<String> = f
        .iter()
        .map(|a| format!("{} := {}", quote_name(&a.target), a.source))
        .collect();
    format!("[{}]", parts.join("; "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let e = parse_expr("a + b * c < 3 and not d or e").unwrap();
        assert_eq!(e.to_string(), "a + b * c < 3 and not d or e");
        let e = parse_expr("(a or b) and c").unwrap();
        assert_eq!(e.to_string(), "(a or b) and c");
        let e = parse_expr("a - (b - c)").unwrap();
        assert_eq!(e.to_string(), "a - (b - c)");
        assert!(parse_expr("a < b < c").is_err());
    }

    #[test]
    fn qualified_and_symbols() {
        let e = parse_expr("Worker1.loc == #done").unwrap();
        assert_eq!(e.vars(), vec!["Worker1.loc"]);
        let e = parse_expr("#\"⊥@free-exec-done\" == l").unwrap();
        assert_eq!(e.to_string(), "#\"⊥@free-exec-done\" == l");
    }

    #[test]
    fn error_position() {
        let err = parse_expr("x +\n  ;").unwrap_err();
        assert_eq!((err.line, err.col), (2, 3));
    }

    #[test]
    fn quoting() {
        assert_eq!(quote_name("free"), "free");
        assert_eq!(quote_name("⊥@a-b-c"), "\"⊥@a-b-c\"");
        assert_eq!(quote_name("and"), "\"and\"");
    }
}
