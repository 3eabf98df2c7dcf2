//! Discrete-time STL: syntax, parsing, negation normal form and the three
//! semantics used by the repair loop (Boolean, robustness, time-to-violation).

mod parse;
mod semantics;

use std::collections::BTreeSet;
use std::fmt;

pub use parse::{parse, parse_with, ParseContext, ParseError};
pub use semantics::{
    eval_bool, robustness, time_to_violation, time_to_violation_nnf, FnSignal, SignalView, TableSignal, Tv,
    ROBUSTNESS_EPS,
};

/// Step interval `[lo, hi]`; `hi = None` is unbounded (clipped to the horizon).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Interval {
    pub lo: usize,
    pub hi: Option<usize>,
}

impl Interval {
    pub const UNBOUNDED: Interval = Interval { lo: 0, hi: None };

    pub const fn new(lo: usize, hi: usize) -> Self {
        Interval { lo, hi: Some(hi) }
    }

    pub fn is_unbounded_from_zero(&self) -> bool {
        self.lo == 0 && self.hi.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    False,
    Predicate { id: String, negated: bool },
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Until { lhs: Box<Formula>, rhs: Box<Formula>, interval: Interval },
    Since { lhs: Box<Formula>, rhs: Box<Formula>, interval: Interval },
    /// Dual of `Until`: `¬(¬lhs U ¬rhs)`.
    Release { lhs: Box<Formula>, rhs: Box<Formula>, interval: Interval },
    /// Dual of `Since`: `¬(¬lhs S ¬rhs)`.
    Trigger { lhs: Box<Formula>, rhs: Box<Formula>, interval: Interval },
    Eventually(Box<Formula>, Interval),
    Globally(Box<Formula>, Interval),
    Once(Box<Formula>, Interval),
    Historically(Box<Formula>, Interval),
    Previous(Box<Formula>),
}

impl Formula {
    pub fn pred(id: &str) -> Formula {
        Formula::Predicate { id: id.to_string(), negated: false }
    }

    pub fn npred(id: &str) -> Formula {
        Formula::Predicate { id: id.to_string(), negated: true }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn globally(f: Formula) -> Formula {
        Formula::Globally(Box::new(f), Interval::UNBOUNDED)
    }

    pub fn globally_in(f: Formula, lo: usize, hi: usize) -> Formula {
        Formula::Globally(Box::new(f), Interval::new(lo, hi))
    }

    pub fn eventually_in(f: Formula, lo: usize, hi: usize) -> Formula {
        Formula::Eventually(Box::new(f), Interval::new(lo, hi))
    }

    pub fn once(f: Formula, iv: Interval) -> Formula {
        Formula::Once(Box::new(f), iv)
    }

    pub fn historically(f: Formula, iv: Interval) -> Formula {
        Formula::Historically(Box::new(f), iv)
    }

    pub fn until(lhs: Formula, rhs: Formula, iv: Interval) -> Formula {
        Formula::Until { lhs: Box::new(lhs), rhs: Box::new(rhs), interval: iv }
    }

    pub fn since(lhs: Formula, rhs: Formula, iv: Interval) -> Formula {
        Formula::Since { lhs: Box::new(lhs), rhs: Box::new(rhs), interval: iv }
    }

    /// Direct children in syntactic order.
    pub fn children(&self) -> Vec<&Formula> {
        use Formula::*;
        match self {
            True | False | Predicate { .. } => vec![],
            Not(f) | Eventually(f, _) | Globally(f, _) | Once(f, _) | Historically(f, _) | Previous(f) => vec![f],
            And(v) | Or(v) => v.iter().collect(),
            Until { lhs, rhs, .. } | Since { lhs, rhs, .. } | Release { lhs, rhs, .. } | Trigger { lhs, rhs, .. } => {
                vec![lhs, rhs]
            }
        }
    }

    /// Predicate ids in first-occurrence order.
    pub fn predicate_ids(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        self.visit(&mut |f| {
            if let Formula::Predicate { id, .. } = f {
                if seen.insert(id.clone()) {
                    out.push(id.clone());
                }
            }
        });
        out
    }

    pub fn visit<'a>(&'a self, cb: &mut impl FnMut(&'a Formula)) {
        cb(self);
        for c in self.children() {
            c.visit(cb);
        }
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    pub fn is_temporal(&self) -> bool {
        use Formula::*;
        matches!(
            self,
            Until { .. }
                | Since { .. }
                | Release { .. }
                | Trigger { .. }
                | Eventually(..)
                | Globally(..)
                | Once(..)
                | Historically(..)
                | Previous(_)
        )
    }

    pub fn is_past(&self) -> bool {
        use Formula::*;
        matches!(self, Since { .. } | Trigger { .. } | Once(..) | Historically(..) | Previous(_))
    }

    /// Negations occur only on predicates.
    pub fn is_nnf(&self) -> bool {
        match self {
            Formula::Not(_) => false,
            f => f.children().iter().all(|c| c.is_nnf()),
        }
    }

    /// Render with intervals in seconds (`dt` seconds per step).
    pub fn display_with(&self, dt: f64) -> Printer<'_> {
        Printer { f: self, dt }
    }
}

/// Negation normal form; `And`/`Or` chains are flattened.
pub fn to_nnf(f: &Formula) -> Formula {
    nnf(f, false)
}

fn nary(and: bool, items: Vec<Formula>) -> Formula {
    let mut flat = Vec::with_capacity(items.len());
    for it in items {
        match (and, it) {
            (true, Formula::And(v)) | (false, Formula::Or(v)) => flat.extend(v),
            (_, other) => flat.push(other),
        }
    }
    if flat.len() == 1 {
        return flat.pop().unwrap();
    }
    if and {
        Formula::And(flat)
    } else {
        Formula::Or(flat)
    }
}

fn nnf(f: &Formula, neg: bool) -> Formula {
    use Formula::*;
    let bx = |g: Formula| Box::new(g);
    match (f, neg) {
        (True, false) | (False, true) => True,
        (True, true) | (False, false) => False,
        (Predicate { id, negated }, n) => Predicate { id: id.clone(), negated: *negated != n },
        (Not(g), n) => nnf(g, !n),
        (And(v), false) | (Or(v), true) => nary(true, v.iter().map(|g| nnf(g, neg)).collect()),
        (Or(v), false) | (And(v), true) => nary(false, v.iter().map(|g| nnf(g, neg)).collect()),
        (Until { lhs, rhs, interval }, false) => Until { lhs: bx(nnf(lhs, false)), rhs: bx(nnf(rhs, false)), interval: *interval },
        (Until { lhs, rhs, interval }, true) => Release { lhs: bx(nnf(lhs, true)), rhs: bx(nnf(rhs, true)), interval: *interval },
        (Release { lhs, rhs, interval }, false) => Release { lhs: bx(nnf(lhs, false)), rhs: bx(nnf(rhs, false)), interval: *interval },
        (Release { lhs, rhs, interval }, true) => Until { lhs: bx(nnf(lhs, true)), rhs: bx(nnf(rhs, true)), interval: *interval },
        (Since { lhs, rhs, interval }, false) => Since { lhs: bx(nnf(lhs, false)), rhs: bx(nnf(rhs, false)), interval: *interval },
        (Since { lhs, rhs, interval }, true) => Trigger { lhs: bx(nnf(lhs, true)), rhs: bx(nnf(rhs, true)), interval: *interval },
        (Trigger { lhs, rhs, interval }, false) => Trigger { lhs: bx(nnf(lhs, false)), rhs: bx(nnf(rhs, false)), interval: *interval },
        (Trigger { lhs, rhs, interval }, true) => Since { lhs: bx(nnf(lhs, true)), rhs: bx(nnf(rhs, true)), interval: *interval },
        (Eventually(g, iv), false) | (Globally(g, iv), true) => Eventually(bx(nnf(g, neg)), *iv),
        (Globally(g, iv), false) | (Eventually(g, iv), true) => Globally(bx(nnf(g, neg)), *iv),
        (Once(g, iv), false) | (Historically(g, iv), true) => Once(bx(nnf(g, neg)), *iv),
        (Historically(g, iv), false) | (Once(g, iv), true) => Historically(bx(nnf(g, neg)), *iv),
        (Previous(g), false) => Previous(bx(nnf(g, false))),
        // P is false at k = 0, so its negation is true there: exactly H[1,1].
        (Previous(g), true) => Historically(bx(nnf(g, true)), Interval::new(1, 1)),
    }
}

/// Conjunction of named rules; a single rule is returned unchanged.
pub fn conjoin_rules(rules: &[(String, Formula)]) -> Formula {
    match rules {
        [(_, f)] => f.clone(),
        _ => Formula::And(rules.iter().map(|(_, f)| f.clone()).collect()),
    }
}

pub struct Printer<'a> {
    f: &'a Formula,
    dt: f64,
}

fn secs(steps: usize, dt: f64) -> String {
    let v = ((steps as f64) * dt * 1e6).round() / 1e6;
    format!("{v}")
}

impl Printer<'_> {
    fn interval(&self, iv: &Interval, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match iv.hi {
            None if iv.lo == 0 => Ok(()),
            None => write!(out, "[{},inf]", secs(iv.lo, self.dt)),
            Some(hi) => write!(out, "[{},{}]", secs(iv.lo, self.dt), secs(hi, self.dt)),
        }
    }

    fn sub(&self, f: &Formula, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(out, "{}", Printer { f, dt: self.dt })
    }
}

impl fmt::Display for Printer<'_> {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Formula::*;
        match self.f {
            True => write!(out, "true"),
            False => write!(out, "false"),
            Predicate { id, negated: false } => write!(out, "{id}"),
            Predicate { id, negated: true } => write!(out, "!{id}"),
            Not(g) => {
                write!(out, "!(")?;
                self.sub(g, out)?;
                write!(out, ")")
            }
            And(v) | Or(v) => {
                let op = if matches!(self.f, And(_)) { " & " } else { " | " };
                for (i, g) in v.iter().enumerate() {
                    if i > 0 {
                        write!(out, "{op}")?;
                    }
                    write!(out, "(")?;
                    self.sub(g, out)?;
                    write!(out, ")")?;
                }
                if v.is_empty() {
                    write!(out, "{}", if matches!(self.f, And(_)) { "true" } else { "false" })?;
                }
                Ok(())
            }
            Until { lhs, rhs, interval } | Since { lhs, rhs, interval } | Release { lhs, rhs, interval } | Trigger { lhs, rhs, interval } => {
                let op = match self.f {
                    Until { .. } => "U",
                    Since { .. } => "S",
                    Release { .. } => "R",
                    _ => "T",
                };
                write!(out, "(")?;
                self.sub(lhs, out)?;
                write!(out, ") {op}")?;
                self.interval(interval, out)?;
                write!(out, " (")?;
                self.sub(rhs, out)?;
                write!(out, ")")
            }
            Eventually(g, iv) | Globally(g, iv) | Once(g, iv) | Historically(g, iv) => {
                let op = match self.f {
                    Eventually(..) => "F",
                    Globally(..) => "G",
                    Once(..) => "O",
                    _ => "H",
                };
                write!(out, "{op}")?;
                self.interval(iv, out)?;
                write!(out, "(")?;
                self.sub(g, out)?;
                write!(out, ")")
            }
            Previous(g) => {
                write!(out, "P(")?;
                self.sub(g, out)?;
                write!(out, ")")
            }
        }
    }
}

/// Steps printed as seconds with `dt = 1`.
impl fmt::Display for Formula {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(out, "{}", self.display_with(1.0))
    }
}
