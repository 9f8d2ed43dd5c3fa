//! Predicate mini-language.
//!
//! ```text
//! expr    := and ("or" and)*
//! and     := unary ("and" unary)*
//! unary   := "not" unary | "(" expr ")" | atom
//! atom    := "true"
//!          | "state" "in" "(" [state ("," state)*] ")"
//!          | "has_label" N | "top_label" "=" N
//!          | "updated_before" N | "updated_at_or_after" N
//! state   := "unknown" | "free" | "occupied"
//! ```

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::predicate::{Predicate, StateSet};
use crate::octree::OccupancyState;

/// Parse failure with the byte offset of the offending token.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at position {pos}")]
pub struct ParseError {
    pub pos: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(pos: usize, message: impl Into<String>) -> Self {
        Self {
            pos,
            message: message.into(),
        }
    }

    /// The input line followed by a caret under the error position.
    pub fn render(&self, input: &str) -> String {
        let col = input[..self.pos.min(input.len())].chars().count();
        format!("{input}\n{}^ {}", " ".repeat(col), self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Word(&'a str),
    Num(&'a str),
    LParen,
    RParen,
    Comma,
    Eq,
    End,
}

impl fmt::Display for Tok<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) | Tok::Num(w) => write!(f, "`{w}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Eq => f.write_str("`=`"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

fn tokenize(s: &str) -> Result<Vec<(usize, Tok<'_>)>, ParseError> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => out.push((i, Tok::LParen)),
            b')' => out.push((i, Tok::RParen)),
            b',' => out.push((i, Tok::Comma)),
            b'=' => out.push((i, Tok::Eq)),
            b'0'..=b'9' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                out.push((start, Tok::Num(&s[start..i])));
                continue;
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Word(&s[start..i])));
                continue;
            }
            _ => {
                let ch = s[i..].chars().next().unwrap_or('?');
                return Err(ParseError::new(i, format!("unexpected character `{ch}`")));
            }
        }
        i += 1;
    }
    out.push((s.len(), Tok::End));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok<'a>)>,
    at: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok<'a> {
        &self.toks[self.at].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> Tok<'a> {
        let t = self.toks[self.at].1.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        ParseError::new(self.pos(), format!("expected {wanted}, found {}", self.peek()))
    }

    fn expect(&mut self, tok: Tok<'a>, wanted: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(wanted))
        }
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }

    fn number<T: FromStr>(&mut self) -> Result<T, ParseError> {
        match *self.peek() {
            Tok::Num(n) => {
                let v = n.parse().map_err(|_| ParseError::new(self.pos(), format!("number `{n}` out of range")))?;
                self.bump();
                Ok(v)
            }
            _ => Err(self.unexpected("a number")),
        }
    }

    fn expr(&mut self) -> Result<Predicate, ParseError> {
        let mut lhs = self.and()?;
        while self.keyword("or") {
            self.bump();
            lhs = lhs.or(self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Predicate, ParseError> {
        let mut lhs = self.unary()?;
        while self.keyword("and") {
            self.bump();
            lhs = lhs.and(self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Predicate, ParseError> {
        if self.keyword("not") {
            self.bump();
            return Ok(self.unary()?.not());
        }
        if *self.peek() == Tok::LParen {
            self.bump();
            let inner = self.expr()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(inner);
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Predicate, ParseError> {
        let Tok::Word(word) = *self.peek() else {
            return Err(self.unexpected("a predicate"));
        };
        let start = self.pos();
        self.bump();
        match word.to_ascii_lowercase().as_str() {
            "true" => Ok(Predicate::True),
            "state" => {
                if !self.keyword("in") {
                    return Err(self.unexpected("`in`"));
                }
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let mut set = StateSet::EMPTY;
                if *self.peek() != Tok::RParen {
                    loop {
                        set = set.with(self.state()?);
                        if *self.peek() == Tok::Comma {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RParen, "`,` or `)`")?;
                Ok(Predicate::StateIn(set))
            }
            "has_label" => Ok(Predicate::HasLabel(self.number()?)),
            "top_label" => {
                self.expect(Tok::Eq, "`=`")?;
                Ok(Predicate::TopLabelIs(self.number()?))
            }
            "updated_before" => Ok(Predicate::UpdatedBefore(self.number()?)),
            "updated_at_or_after" => Ok(Predicate::UpdatedAtOrAfter(self.number()?)),
            _ => Err(ParseError::new(start, format!("unknown predicate `{word}`"))),
        }
    }

    fn state(&mut self) -> Result<OccupancyState, ParseError> {
        if let Tok::Word(w) = *self.peek() {
            let s = match w.to_ascii_lowercase().as_str() {
                "unknown" => Some(OccupancyState::Unknown),
                "free" => Some(OccupancyState::Free),
                "occupied" => Some(OccupancyState::Occupied),
                _ => None,
            };
            if let Some(s) = s {
                self.bump();
                return Ok(s);
            }
        }
        Err(self.unexpected("`unknown`, `free` or `occupied`"))
    }
}

impl FromStr for Predicate {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, ParseError> {
        let mut p = Parser { toks: tokenize(s)?, at: 0 };
        let pred = p.expr()?;
        if *p.peek() != Tok::End {
            return Err(p.unexpected("`and`, `or` or end of input"));
        }
        Ok(pred)
    }
}
