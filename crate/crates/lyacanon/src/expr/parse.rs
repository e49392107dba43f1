//! Recursive-descent parser for the expression grammar.
//!
//! Grammar (whitespace insignificant):
//!   expr   := term (('+' | '-') term)*
//!   term   := unary (('*' | '/') unary)*
//!   unary  := '-' unary | power
//!   power  := atom ('^' unary)?          -- right associative
//!   atom   := number | ident | ident '(' expr ')' | '(' expr ')'
//!
//! Precedence: '^' > unary '-' > '*' '/' > binary '+' '-'.
//! Identifiers: [A-Za-z][A-Za-z0-9_]*. A unary minus applied directly to a
//! numeric literal folds into a negative constant so printed trees reparse
//! to the same structure.

use super::{Expr, Func};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unknown function '{name}' at line {line}, column {col}")]
    UnknownFunction { name: String, line: usize, col: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Eof,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.src.get(self.pos).copied()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn next_token(&mut self) -> Result<Spanned, ParseError> {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.bump();
        }
        let (line, col) = (self.line, self.col);
        let Some(c) = self.peek() else {
            return Ok(Spanned { tok: Tok::Eof, line, col });
        };
        let tok = match c {
            b'+' => {
                self.bump();
                Tok::Plus
            }
            b'-' => {
                self.bump();
                Tok::Minus
            }
            b'*' => {
                self.bump();
                Tok::Star
            }
            b'/' => {
                self.bump();
                Tok::Slash
            }
            b'^' => {
                self.bump();
                Tok::Caret
            }
            b'(' => {
                self.bump();
                Tok::LParen
            }
            b')' => {
                self.bump();
                Tok::RParen
            }
            c if c.is_ascii_digit() || c == b'.' => self.lex_number(line, col)?,
            c if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
                    self.bump();
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                Tok::Ident(name.to_string())
            }
            c => {
                return Err(ParseError::Syntax {
                    line,
                    col,
                    msg: format!("unexpected character '{}'", c as char),
                })
            }
        };
        Ok(Spanned { tok, line, col })
    }

    fn lex_number(&mut self, line: usize, col: usize) -> Result<Tok, ParseError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.bump();
        }
        if self.peek() == Some(b'.') {
            self.bump();
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.bump();
            }
        }
        if matches!(self.peek(), Some(b'e') | Some(b'E')) {
            // exponent only if followed by digits or sign+digits
            let save = (self.pos, self.line, self.col);
            self.bump();
            if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                self.bump();
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.bump();
                }
            } else {
                (self.pos, self.line, self.col) = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>().map(Tok::Num).map_err(|_| ParseError::Syntax {
            line,
            col,
            msg: format!("invalid numeric literal '{text}'"),
        })
    }
}

struct Parser {
    tokens: Vec<Spanned>,
    idx: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.tokens[self.idx]
    }

    fn bump(&mut self) -> &Spanned {
        let s = &self.tokens[self.idx];
        if self.idx + 1 < self.tokens.len() {
            self.idx += 1;
        }
        s
    }

    fn error(&self, msg: impl Into<String>) -> ParseError {
        let s = self.peek();
        ParseError::Syntax { line: s.line, col: s.col, msg: msg.into() }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().tok {
                Tok::Plus => {
                    self.bump();
                    lhs = lhs.add(self.term()?);
                }
                Tok::Minus => {
                    self.bump();
                    lhs = lhs.sub(self.term()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek().tok {
                Tok::Star => {
                    self.bump();
                    lhs = lhs.mul(self.unary()?);
                }
                Tok::Slash => {
                    self.bump();
                    lhs = lhs.div(self.unary()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek().tok == Tok::Minus {
            self.bump();
            let inner = self.unary()?;
            // fold "-<literal>" so printing negative constants round-trips
            return Ok(match inner {
                Expr::Const(v) => Expr::Const(-v),
                other => other.neg(),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek().tok == Tok::Caret {
            self.bump();
            let exponent = self.unary()?;
            return Ok(base.pow(exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let (line, col) = (self.peek().line, self.peek().col);
        match self.peek().tok.clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::Ident(name) => {
                self.bump();
                if self.peek().tok == Tok::LParen {
                    self.bump();
                    let func = Func::from_name(&name)
                        .ok_or(ParseError::UnknownFunction { name, line, col })?;
                    let arg = self.expr()?;
                    if self.peek().tok != Tok::RParen {
                        return Err(self.error("expected ')'"));
                    }
                    self.bump();
                    Ok(Expr::apply(func, arg))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                if self.peek().tok != Tok::RParen {
                    return Err(self.error("expected ')'"));
                }
                self.bump();
                Ok(inner)
            }
            _ => Err(self.error("expected a number, identifier or '('")),
        }
    }
}

/// Parses an expression string into an [`Expr`].
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let mut lexer = Lexer::new(text);
    let mut tokens = Vec::new();
    loop {
        let s = lexer.next_token()?;
        let done = s.tok == Tok::Eof;
        tokens.push(s);
        if done {
            break;
        }
    }
    let mut parser = Parser { tokens, idx: 0 };
    let e = parser.expr()?;
    if parser.peek().tok != Tok::Eof {
        return Err(parser.error("trailing input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_first_integral() {
        let e = parse("(x1 - x2)*exp(xi1*t)").unwrap();
        let expected = Expr::var("x1")
            .sub(Expr::var("x2"))
            .mul(Expr::apply(Func::Exp, Expr::var("xi1").mul(Expr::var("t"))));
        assert_eq!(e, expected);
    }

    #[test]
    fn parses_zero_literal() {
        assert_eq!(parse("0").unwrap(), Expr::Const(0.0));
    }

    #[test]
    fn parses_power_of_function() {
        let e = parse("sin(xi4*t)^2").unwrap();
        let expected = Expr::apply(Func::Sin, Expr::var("xi4").mul(Expr::var("t")))
            .pow(Expr::Const(2.0));
        assert_eq!(e, expected);
    }

    #[test]
    fn caret_is_right_associative() {
        assert_eq!(parse("2^3^2").unwrap(), parse("2^(3^2)").unwrap());
    }

    #[test]
    fn unary_minus_below_caret() {
        let e = parse("-x^2").unwrap();
        assert_eq!(e, parse("x^2").unwrap().neg());
    }

    #[test]
    fn reports_line_and_column() {
        let err = parse("x1 +\n* x2").unwrap_err();
        match err {
            ParseError::Syntax { line, col, .. } => {
                assert_eq!(line, 2);
                assert_eq!(col, 1);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_function() {
        assert!(matches!(
            parse("tanh(x)").unwrap_err(),
            ParseError::UnknownFunction { .. }
        ));
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(parse("1.5e-3").unwrap(), Expr::Const(1.5e-3));
        assert_eq!(parse("2E2").unwrap(), Expr::Const(200.0));
    }

    #[test]
    fn trailing_input_rejected() {
        assert!(parse("x1 x2").is_err());
    }
}
