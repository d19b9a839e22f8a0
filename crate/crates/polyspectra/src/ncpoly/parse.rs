//! Recursive-descent parser for polynomial expressions.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr    := [+|-] term { (+|-) term }
//! term    := factor { * factor }
//! factor  := number | number'i' | 'i' | 'x' | 'y' | '(' expr ')'
//! ```
//!
//! Numbers are floating-point literals (`2`, `1.5`, `3e-2`); a number
//! immediately followed by `i` is an imaginary literal, and `(a+bi)`
//! arises from an ordinary parenthesized sum. Errors carry the 0-based
//! byte position of the offending token.

use num_complex::Complex64;

use super::NCPolynomial;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Imag(f64),
    X,
    Y,
    Plus,
    Minus,
    Star,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn error(&self, pos: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            pos,
            msg: msg.into(),
        }
    }

    fn tokens(mut self) -> Result<Vec<(usize, Tok)>> {
        let mut out = Vec::new();
        while self.pos < self.src.len() {
            let start = self.pos;
            let b = self.src[self.pos];
            match b {
                b' ' | b'\t' | b'\n' | b'\r' => {
                    self.pos += 1;
                }
                b'+' => {
                    out.push((start, Tok::Plus));
                    self.pos += 1;
                }
                b'-' => {
                    out.push((start, Tok::Minus));
                    self.pos += 1;
                }
                b'*' => {
                    out.push((start, Tok::Star));
                    self.pos += 1;
                }
                b'(' => {
                    out.push((start, Tok::LParen));
                    self.pos += 1;
                }
                b')' => {
                    out.push((start, Tok::RParen));
                    self.pos += 1;
                }
                b'x' | b'X' => {
                    out.push((start, Tok::X));
                    self.pos += 1;
                }
                b'y' | b'Y' => {
                    out.push((start, Tok::Y));
                    self.pos += 1;
                }
                b'i' => {
                    out.push((start, Tok::Imag(1.0)));
                    self.pos += 1;
                }
                b'0'..=b'9' | b'.' => {
                    let tok = self.lex_number(start)?;
                    out.push((start, tok));
                }
                _ => {
                    let ch = self.src[start] as char;
                    return Err(self.error(
                        start,
                        format!("unexpected character '{ch}' (variables are x and y)"),
                    ));
                }
            }
        }
        Ok(out)
    }

    fn lex_number(&mut self, start: usize) -> Result<Tok> {
        let mut end = self.pos;
        let mut seen_dot = false;
        while end < self.src.len() {
            match self.src[end] {
                b'0'..=b'9' => end += 1,
                b'.' if !seen_dot => {
                    seen_dot = true;
                    end += 1;
                }
                _ => break,
            }
        }
        // Optional exponent: e/E, optional sign, at least one digit.
        if end < self.src.len() && (self.src[end] == b'e' || self.src[end] == b'E') {
            let mut cursor = end + 1;
            if cursor < self.src.len() && (self.src[cursor] == b'+' || self.src[cursor] == b'-') {
                cursor += 1;
            }
            if cursor < self.src.len() && self.src[cursor].is_ascii_digit() {
                cursor += 1;
                while cursor < self.src.len() && self.src[cursor].is_ascii_digit() {
                    cursor += 1;
                }
                end = cursor;
            }
        }
        let text = std::str::from_utf8(&self.src[start..end]).expect("ascii");
        let val: f64 = text
            .parse()
            .map_err(|_| self.error(start, format!("invalid numeric literal '{text}'")))?;
        self.pos = end;
        // A trailing 'i' makes the literal imaginary.
        if self.pos < self.src.len() && self.src[self.pos] == b'i' {
            self.pos += 1;
            return Ok(Tok::Imag(val));
        }
        Ok(Tok::Num(val))
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    idx: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.idx).map(|(p, _)| *p).unwrap_or(self.len)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.idx).map(|(_, t)| t.clone());
        self.idx += 1;
        t
    }

    fn error(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            pos: self.pos(),
            msg: msg.into(),
        }
    }

    fn expr(&mut self) -> Result<NCPolynomial> {
        let mut negate = false;
        match self.peek() {
            Some(Tok::Plus) => {
                self.bump();
            }
            Some(Tok::Minus) => {
                negate = true;
                self.bump();
            }
            _ => {}
        }
        let mut acc = self.term()?;
        if negate {
            acc = -&acc;
        }
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    let t = self.term()?;
                    acc = &acc + &t;
                }
                Some(Tok::Minus) => {
                    self.bump();
                    let t = self.term()?;
                    acc = &acc - &t;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<NCPolynomial> {
        let mut acc = self.factor()?;
        while matches!(self.peek(), Some(Tok::Star)) {
            self.bump();
            let f = self.factor()?;
            acc = &acc * &f;
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<NCPolynomial> {
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(NCPolynomial::constant(Complex64::new(v, 0.0))),
            Some(Tok::Imag(v)) => Ok(NCPolynomial::constant(Complex64::new(0.0, v))),
            Some(Tok::X) => Ok(NCPolynomial::x()),
            Some(Tok::Y) => Ok(NCPolynomial::y()),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                match self.bump() {
                    Some(Tok::RParen) => Ok(inner),
                    _ => Err(Error::Parse {
                        pos,
                        msg: "unclosed parenthesis".to_string(),
                    }),
                }
            }
            Some(tok) => Err(Error::Parse {
                pos,
                msg: format!("expected a number, i, x, y, or '(', found {tok:?}"),
            }),
            None => Err(Error::Parse {
                pos,
                msg: "unexpected end of input".to_string(),
            }),
        }
    }
}

/// Parses an expression into canonical [`NCPolynomial`] form.
pub fn parse(src: &str) -> Result<NCPolynomial> {
    let toks = Lexer::new(src).tokens()?;
    if toks.is_empty() {
        return Err(Error::Parse {
            pos: 0,
            msg: "empty input".to_string(),
        });
    }
    let mut parser = Parser {
        toks,
        idx: 0,
        len: src.len(),
    };
    let p = parser.expr()?;
    if parser.idx < parser.toks.len() {
        return Err(parser.error("trailing input after expression"));
    }
    Ok(p)
}
