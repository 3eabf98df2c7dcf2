use std::collections::BTreeMap;

use thiserror::Error;

use super::{Formula, Interval};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {position}: expected {expected}")]
pub struct ParseError {
    pub position: usize,
    pub expected: String,
}

/// Step size and named interval parameters (seconds) for the parser.
#[derive(Debug, Clone)]
pub struct ParseContext {
    pub dt: f64,
    pub params: BTreeMap<String, f64>,
}

impl Default for ParseContext {
    fn default() -> Self {
        ParseContext { dt: 1.0, params: BTreeMap::new() }
    }
}

impl ParseContext {
    pub fn with_dt(dt: f64) -> Self {
        ParseContext { dt, params: BTreeMap::new() }
    }

    pub fn param(mut self, name: &str, seconds: f64) -> Self {
        self.params.insert(name.to_string(), seconds);
        self
    }

    /// Seconds to steps, nearest with ties rounding up.
    pub fn to_steps(&self, seconds: f64) -> usize {
        (seconds / self.dt + 0.5 + 1e-9).floor().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Op(&'static str),
    Temporal(char),
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_lowercase() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_lowercase() || bytes[i].is_ascii_digit() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(text[start..i].to_string())));
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.' || bytes[i] == b'e' || bytes[i] == b'E') {
                if (bytes[i] == b'e' || bytes[i] == b'E') && i + 1 < bytes.len() && bytes[i + 1] == b'-' {
                    i += 1;
                }
                i += 1;
            }
            let v: f64 = text[start..i].parse().map_err(|_| ParseError { position: start, expected: "number".into() })?;
            out.push((start, Tok::Num(v)));
            continue;
        }
        if "GFOHPUSRT".contains(c) {
            let next = bytes.get(i + 1).copied();
            if next.map_or(true, |n| !(n.is_ascii_alphanumeric() || n == b'_')) {
                out.push((start, Tok::Temporal(c)));
                i += 1;
                continue;
            }
        }
        let op: &'static str = match c {
            '=' if bytes.get(i + 1) == Some(&b'>') => "=>",
            '!' => "!",
            '&' => "&",
            '|' => "|",
            '(' => "(",
            ')' => ")",
            '[' => "[",
            ']' => "]",
            ',' => ",",
            _ => return Err(ParseError { position: start, expected: "token".into() }),
        };
        i += op.len();
        out.push((start, Tok::Op(op)));
    }
    Ok(out)
}

struct Parser<'c> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    ctx: &'c ParseContext,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn at(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.0)
    }

    fn err<T>(&self, expected: &str) -> Result<T, ParseError> {
        Err(ParseError { position: self.at(), expected: expected.to_string() })
    }

    fn eat(&mut self, op: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Op(o)) if *o == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: &str) -> Result<(), ParseError> {
        if self.eat(op) {
            Ok(())
        } else {
            self.err(&format!("'{op}'"))
        }
    }

    fn implication(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.disjunction()?;
        if self.eat("=>") {
            let rhs = self.implication()?;
            return Ok(Formula::Or(vec![Formula::not(lhs), rhs]));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Formula, ParseError> {
        let mut items = vec![self.conjunction()?];
        while self.eat("|") {
            items.push(self.conjunction()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { Formula::Or(items) })
    }

    fn conjunction(&mut self) -> Result<Formula, ParseError> {
        let mut items = vec![self.binary()?];
        while self.eat("&") {
            items.push(self.binary()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { Formula::And(items) })
    }

    fn binary(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Temporal(c @ ('U' | 'S' | 'R' | 'T'))) = self.peek().cloned() {
            self.pos += 1;
            let iv = self.interval()?;
            let rhs = self.unary()?;
            let (l, r) = (Box::new(lhs), Box::new(rhs));
            lhs = match c {
                'U' => Formula::Until { lhs: l, rhs: r, interval: iv },
                'S' => Formula::Since { lhs: l, rhs: r, interval: iv },
                'R' => Formula::Release { lhs: l, rhs: r, interval: iv },
                _ => Formula::Trigger { lhs: l, rhs: r, interval: iv },
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Op("!")) => {
                self.pos += 1;
                if let Some(Tok::Ident(id)) = self.peek().cloned() {
                    if id != "true" && id != "false" {
                        self.pos += 1;
                        return Ok(Formula::Predicate { id, negated: true });
                    }
                }
                Ok(Formula::not(self.unary()?))
            }
            Some(Tok::Temporal(c @ ('G' | 'F' | 'O' | 'H'))) => {
                self.pos += 1;
                let iv = self.interval()?;
                let g = Box::new(self.unary()?);
                Ok(match c {
                    'G' => Formula::Globally(g, iv),
                    'F' => Formula::Eventually(g, iv),
                    'O' => Formula::Once(g, iv),
                    _ => Formula::Historically(g, iv),
                })
            }
            Some(Tok::Temporal('P')) => {
                self.pos += 1;
                Ok(Formula::Previous(Box::new(self.unary()?)))
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Formula, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Ident(id)) => {
                self.pos += 1;
                Ok(match id.as_str() {
                    "true" => Formula::True,
                    "false" => Formula::False,
                    _ => Formula::Predicate { id, negated: false },
                })
            }
            Some(Tok::Op("(")) => {
                self.pos += 1;
                let f = self.implication()?;
                self.expect(")")?;
                Ok(f)
            }
            _ => self.err("predicate, 'true', 'false', unary operator or '('"),
        }
    }

    fn bound(&mut self, allow_inf: bool) -> Result<Option<usize>, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Some(self.ctx.to_steps(v)))
            }
            Some(Tok::Ident(id)) if id == "inf" && allow_inf => {
                self.pos += 1;
                Ok(None)
            }
            Some(Tok::Ident(id)) => match self.ctx.params.get(&id) {
                Some(v) => {
                    self.pos += 1;
                    Ok(Some(self.ctx.to_steps(*v)))
                }
                None => self.err("number or known parameter"),
            },
            _ => self.err("interval bound"),
        }
    }

    fn interval(&mut self) -> Result<Interval, ParseError> {
        if !self.eat("[") {
            return Ok(Interval::UNBOUNDED);
        }
        let at = self.at();
        let lo = self.bound(false)?.unwrap_or(0);
        self.expect(",")?;
        let hi = self.bound(true)?;
        self.expect("]")?;
        if let Some(h) = hi {
            if h < lo {
                return Err(ParseError { position: at, expected: "interval with lower bound <= upper bound".into() });
            }
        }
        Ok(Interval { lo, hi })
    }
}

/// Parse with `dt = 1` (interval values are steps).
pub fn parse(text: &str) -> Result<Formula, ParseError> {
    parse_with(text, &ParseContext::default())
}

pub fn parse_with(text: &str, ctx: &ParseContext) -> Result<Formula, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, end: text.len(), ctx };
    let f = p.implication()?;
    if p.pos != p.toks.len() {
        return p.err("end of input");
    }
    Ok(f)
}
