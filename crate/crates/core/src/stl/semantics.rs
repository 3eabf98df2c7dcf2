use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{to_nnf, Formula, Interval};

/// Magnitude substituted for an exact-zero robustness value.
pub const ROBUSTNESS_EPS: f64 = 1e-9;

/// Discrete signal over `k ∈ [0, len-1]`.
pub trait SignalView {
    fn len(&self) -> usize;
    fn eval(&self, pred: &str, k: usize) -> bool;
    fn rob(&self, pred: &str, k: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn horizon(&self) -> usize {
        self.len().saturating_sub(1)
    }
}

/// Signal stored as one `(truth, robustness)` column per predicate.
#[derive(Debug, Clone, Default)]
pub struct TableSignal {
    len: usize,
    columns: HashMap<String, Vec<(bool, f64)>>,
}

impl TableSignal {
    pub fn new(len: usize) -> Self {
        TableSignal { len, columns: HashMap::new() }
    }

    /// Column from robustness values; truth is their sign.
    pub fn with_rob(mut self, id: &str, rob: Vec<f64>) -> Self {
        assert_eq!(rob.len(), self.len, "column length");
        self.columns.insert(id.to_string(), rob.into_iter().map(|r| (r > 0.0, r)).collect());
        self
    }

    /// Column from truth values with characteristic robustness ±1.
    pub fn with_bool(mut self, id: &str, truth: Vec<bool>) -> Self {
        assert_eq!(truth.len(), self.len, "column length");
        self.columns
            .insert(id.to_string(), truth.into_iter().map(|b| (b, if b { 1.0 } else { -1.0 })).collect());
        self
    }

    pub fn insert(&mut self, id: &str, column: Vec<(bool, f64)>) {
        assert_eq!(column.len(), self.len, "column length");
        self.columns.insert(id.to_string(), column);
    }

    pub fn column(&self, id: &str) -> Option<&[(bool, f64)]> {
        self.columns.get(id).map(|v| v.as_slice())
    }

    fn cell(&self, id: &str, k: usize) -> (bool, f64) {
        match self.columns.get(id).and_then(|c| c.get(k)) {
            Some(v) => *v,
            None => panic!("signal has no value for predicate `{id}` at step {k}"),
        }
    }
}

impl SignalView for TableSignal {
    fn len(&self) -> usize {
        self.len
    }

    fn eval(&self, pred: &str, k: usize) -> bool {
        self.cell(pred, k).0
    }

    fn rob(&self, pred: &str, k: usize) -> f64 {
        self.cell(pred, k).1
    }
}

/// Signal backed by closures, evaluated lazily and cached.
pub struct FnSignal<E, R>
where
    E: Fn(&str, usize) -> bool,
    R: Fn(&str, usize) -> f64,
{
    len: usize,
    eval: E,
    rob: R,
    cache: RefCell<HashMap<(String, usize), f64>>,
}

impl<E, R> FnSignal<E, R>
where
    E: Fn(&str, usize) -> bool,
    R: Fn(&str, usize) -> f64,
{
    pub fn new(len: usize, eval: E, rob: R) -> Self {
        FnSignal { len, eval, rob, cache: RefCell::new(HashMap::new()) }
    }
}

impl<E, R> SignalView for FnSignal<E, R>
where
    E: Fn(&str, usize) -> bool,
    R: Fn(&str, usize) -> f64,
{
    fn len(&self) -> usize {
        self.len
    }

    fn eval(&self, pred: &str, k: usize) -> bool {
        (self.eval)(pred, k)
    }

    fn rob(&self, pred: &str, k: usize) -> f64 {
        let key = (pred.to_string(), k);
        if let Some(v) = self.cache.borrow().get(&key) {
            return *v;
        }
        let v = (self.rob)(pred, k);
        self.cache.borrow_mut().insert(key, v);
        v
    }
}

/// Time-to-violation: a step, or `Inf` when never violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tv {
    At(usize),
    Inf,
}

impl Tv {
    pub fn is_inf(&self) -> bool {
        matches!(self, Tv::Inf)
    }

    pub fn step(&self) -> Option<usize> {
        match self {
            Tv::At(k) => Some(*k),
            Tv::Inf => None,
        }
    }
}

impl fmt::Display for Tv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tv::At(k) => write!(f, "{k}"),
            Tv::Inf => write!(f, "inf"),
        }
    }
}

/// A bounded lattice with predicate leaves; `meet`/`join` realize ∧/∨.
trait Domain {
    type V: Copy;
    /// Identity of `meet` (value of an empty conjunction).
    fn top(&self) -> Self::V;
    /// Identity of `join`.
    fn bottom(&self) -> Self::V;
    /// Value of a strong operator whose window holds no witness.
    fn fail(&self, k: usize, future: bool) -> Self::V;
    fn meet(&self, a: Self::V, b: Self::V) -> Self::V;
    fn join(&self, a: Self::V, b: Self::V) -> Self::V;
    fn neg(&self, v: Self::V) -> Self::V;
    fn leaf(&self, id: &str, negated: bool, k: usize) -> Self::V;
}

struct BoolDomain<'s, S: SignalView + ?Sized>(&'s S);
struct RobDomain<'s, S: SignalView + ?Sized>(&'s S);
struct TvDomain<'s, S: SignalView + ?Sized>(&'s S);

impl<S: SignalView + ?Sized> Domain for BoolDomain<'_, S> {
    type V = bool;
    fn top(&self) -> bool {
        true
    }
    fn bottom(&self) -> bool {
        false
    }
    fn fail(&self, _: usize, _: bool) -> bool {
        false
    }
    fn meet(&self, a: bool, b: bool) -> bool {
        a && b
    }
    fn join(&self, a: bool, b: bool) -> bool {
        a || b
    }
    fn neg(&self, v: bool) -> bool {
        !v
    }
    fn leaf(&self, id: &str, negated: bool, k: usize) -> bool {
        self.0.eval(id, k) != negated
    }
}

impl<S: SignalView + ?Sized> Domain for RobDomain<'_, S> {
    type V = f64;
    fn top(&self) -> f64 {
        f64::INFINITY
    }
    fn bottom(&self) -> f64 {
        f64::NEG_INFINITY
    }
    fn fail(&self, _: usize, _: bool) -> f64 {
        f64::NEG_INFINITY
    }
    fn meet(&self, a: f64, b: f64) -> f64 {
        a.min(b)
    }
    fn join(&self, a: f64, b: f64) -> f64 {
        a.max(b)
    }
    fn neg(&self, v: f64) -> f64 {
        -v
    }
    fn leaf(&self, id: &str, negated: bool, k: usize) -> f64 {
        let r = self.0.rob(id, k);
        if negated {
            -r
        } else {
            r
        }
    }
}

impl<S: SignalView + ?Sized> Domain for TvDomain<'_, S> {
    type V = Tv;
    fn top(&self) -> Tv {
        Tv::Inf
    }
    fn bottom(&self) -> Tv {
        Tv::At(0)
    }
    fn fail(&self, k: usize, future: bool) -> Tv {
        if future {
            Tv::At(self.0.horizon())
        } else {
            Tv::At(k)
        }
    }
    fn meet(&self, a: Tv, b: Tv) -> Tv {
        a.min(b)
    }
    fn join(&self, a: Tv, b: Tv) -> Tv {
        a.max(b)
    }
    fn neg(&self, _: Tv) -> Tv {
        unreachable!("time-to-violation is evaluated on negation normal form")
    }
    fn leaf(&self, id: &str, negated: bool, k: usize) -> Tv {
        if self.0.eval(id, k) != negated {
            Tv::Inf
        } else {
            Tv::At(k)
        }
    }
}

struct Evaluator<'f, D: Domain> {
    dom: D,
    h: usize,
    memo: HashMap<(*const Formula, usize), D::V>,
    _f: std::marker::PhantomData<&'f Formula>,
}

/// Steps `[k+lo, min(k+hi, h)]`, empty when the start exceeds the horizon.
fn future_window(k: usize, iv: &Interval, h: usize) -> Option<(usize, usize)> {
    let a = k + iv.lo;
    let b = iv.hi.map_or(h, |hi| (k + hi).min(h));
    (a <= b).then_some((a, b))
}

/// Steps `[max(k-hi, 0), k-lo]`, empty when `lo > k`.
fn past_window(k: usize, iv: &Interval) -> Option<(usize, usize)> {
    let b = k.checked_sub(iv.lo)?;
    let a = iv.hi.map_or(0, |hi| k.saturating_sub(hi));
    Some((a, b))
}

impl<'f, D: Domain> Evaluator<'f, D> {
    fn new(dom: D, h: usize) -> Self {
        Evaluator { dom, h, memo: HashMap::new(), _f: std::marker::PhantomData }
    }

    fn at(&mut self, f: &'f Formula, k: usize) -> D::V {
        let key = (f as *const Formula, k);
        if let Some(v) = self.memo.get(&key) {
            return *v;
        }
        let v = self.compute(f, k);
        self.memo.insert(key, v);
        v
    }

    fn compute(&mut self, f: &'f Formula, k: usize) -> D::V {
        use Formula::*;
        match f {
            True => self.dom.top(),
            False => self.dom.fail(k, false),
            Predicate { id, negated } => self.dom.leaf(id, *negated, k),
            Not(g) => {
                let v = self.at(g, k);
                self.dom.neg(v)
            }
            And(v) => {
                let mut acc = self.dom.top();
                for g in v {
                    let x = self.at(g, k);
                    acc = self.dom.meet(acc, x);
                }
                acc
            }
            Or(v) => {
                if v.is_empty() {
                    return self.dom.fail(k, false);
                }
                let mut acc = self.dom.bottom();
                for g in v {
                    let x = self.at(g, k);
                    acc = self.dom.join(acc, x);
                }
                acc
            }
            Globally(g, iv) => {
                let mut acc = self.dom.top();
                if let Some((a, b)) = future_window(k, iv, self.h) {
                    for t in a..=b {
                        let x = self.at(g, t);
                        acc = self.dom.meet(acc, x);
                    }
                }
                acc
            }
            Eventually(g, iv) => match future_window(k, iv, self.h) {
                None => self.dom.fail(k, true),
                Some((a, b)) => {
                    let mut acc = self.dom.bottom();
                    for t in a..=b {
                        let x = self.at(g, t);
                        acc = self.dom.join(acc, x);
                    }
                    acc
                }
            },
            Historically(g, iv) => {
                let mut acc = self.dom.top();
                if let Some((a, b)) = past_window(k, iv) {
                    for t in a..=b {
                        let x = self.at(g, t);
                        acc = self.dom.meet(acc, x);
                    }
                }
                acc
            }
            Once(g, iv) => match past_window(k, iv) {
                None => self.dom.fail(k, false),
                Some((a, b)) => {
                    let mut acc = self.dom.bottom();
                    for t in a..=b {
                        let x = self.at(g, t);
                        acc = self.dom.join(acc, x);
                    }
                    acc
                }
            },
            Previous(g) => {
                if k == 0 {
                    self.dom.fail(k, false)
                } else {
                    self.at(g, k - 1)
                }
            }
            Until { lhs, rhs, interval } => {
                let Some((a, b)) = future_window(k, interval, self.h) else {
                    return self.dom.fail(k, true);
                };
                // lhs must hold on [k, t)
                let mut hold = self.dom.top();
                let mut res = self.dom.bottom();
                for t in k..=b {
                    if t >= a {
                        let r = self.at(rhs, t);
                        res = self.dom.join(res, self.dom.meet(r, hold));
                    }
                    let l = self.at(lhs, t);
                    hold = self.dom.meet(hold, l);
                }
                res
            }
            Release { lhs, rhs, interval } => {
                let Some((a, b)) = future_window(k, interval, self.h) else {
                    return self.dom.top();
                };
                let mut freed = self.dom.bottom();
                let mut res = self.dom.top();
                for t in k..=b {
                    if t >= a {
                        let r = self.at(rhs, t);
                        res = self.dom.meet(res, self.dom.join(r, freed));
                    }
                    let l = self.at(lhs, t);
                    freed = self.dom.join(freed, l);
                }
                res
            }
            Since { lhs, rhs, interval } => {
                let Some((a, b)) = past_window(k, interval) else {
                    return self.dom.fail(k, false);
                };
                // lhs must hold on (t, k]
                let mut hold = self.dom.top();
                let mut res = self.dom.bottom();
                for t in (a..=k).rev() {
                    if t <= b {
                        let r = self.at(rhs, t);
                        res = self.dom.join(res, self.dom.meet(r, hold));
                    }
                    let l = self.at(lhs, t);
                    hold = self.dom.meet(hold, l);
                }
                res
            }
            Trigger { lhs, rhs, interval } => {
                let Some((a, b)) = past_window(k, interval) else {
                    return self.dom.top();
                };
                let mut freed = self.dom.bottom();
                let mut res = self.dom.top();
                for t in (a..=k).rev() {
                    if t <= b {
                        let r = self.at(rhs, t);
                        res = self.dom.meet(res, self.dom.join(r, freed));
                    }
                    let l = self.at(lhs, t);
                    freed = self.dom.join(freed, l);
                }
                res
            }
        }
    }
}

/// Boolean satisfaction at step `k`.
pub fn eval_bool<S: SignalView + ?Sized>(f: &Formula, sig: &S, k: usize) -> bool {
    let mut ev = Evaluator::new(BoolDomain(sig), sig.horizon());
    ev.at(f, k)
}

/// Max/min robustness at step `k`; exact zeros are replaced by `±ε` with the
/// sign of the Boolean verdict.
pub fn robustness<S: SignalView + ?Sized>(f: &Formula, sig: &S, k: usize) -> f64 {
    let mut ev = Evaluator::new(RobDomain(sig), sig.horizon());
    let r = ev.at(f, k);
    if r == 0.0 {
        if eval_bool(f, sig, k) {
            ROBUSTNESS_EPS
        } else {
            -ROBUSTNESS_EPS
        }
    } else {
        r
    }
}

/// Time-to-violation at step `k` (computed on the negation normal form).
pub fn time_to_violation<S: SignalView + ?Sized>(f: &Formula, sig: &S, k: usize) -> Tv {
    if f.is_nnf() {
        time_to_violation_nnf(f, sig, k)
    } else {
        time_to_violation_nnf(&to_nnf(f), sig, k)
    }
}

/// Time-to-violation of a formula already in negation normal form.
pub fn time_to_violation_nnf<S: SignalView + ?Sized>(f: &Formula, sig: &S, k: usize) -> Tv {
    debug_assert!(f.is_nnf());
    let mut ev = Evaluator::new(TvDomain(sig), sig.horizon());
    ev.at(f, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::parse;

    fn sig_p(truth: &[bool]) -> TableSignal {
        TableSignal::new(truth.len()).with_bool("p", truth.to_vec())
    }

    #[test]
    fn globally_all_true() {
        let s = sig_p(&[true; 6]);
        assert!(eval_bool(&parse("G(p)").unwrap(), &s, 0));
        assert_eq!(time_to_violation(&parse("G(p)").unwrap(), &s, 0), Tv::Inf);
    }

    #[test]
    fn once_window() {
        let mut t = [false; 8];
        t[2] = true;
        let s = sig_p(&t);
        let f = parse("O[0,3](p)").unwrap();
        assert!(eval_bool(&f, &s, 4));
        assert!(eval_bool(&f, &s, 5));
        assert!(!eval_bool(&f, &s, 6));
        assert!(!eval_bool(&f, &s, 1));
    }

    #[test]
    fn until_example() {
        let s = TableSignal::new(4)
            .with_bool("p1", vec![true, true, false, false])
            .with_bool("p2", vec![false, false, true, false]);
        assert!(eval_bool(&parse("p1 U[0,2] p2").unwrap(), &s, 0));
        assert!(!eval_bool(&parse("p1 U[0,1] p2").unwrap(), &s, 0));
    }

    #[test]
    fn robustness_basics() {
        let s = TableSignal::new(3).with_rob("a", vec![0.3, 0.3, 0.3]).with_rob("b", vec![0.2, 0.5, 0.1]);
        assert_eq!(robustness(&parse("!(a)").unwrap(), &s, 0), -0.3);
        assert_eq!(robustness(&parse("b | a").unwrap(), &s, 1), 0.5);
        assert_eq!(robustness(&parse("G(a)").unwrap(), &s, 0), 0.3);
    }

    #[test]
    fn tv_first_violation() {
        let s = sig_p(&[true, true, true, false, true, false]);
        assert_eq!(time_to_violation(&parse("G(p)").unwrap(), &s, 0), Tv::At(3));
    }

    #[test]
    fn tv_disjunction_window() {
        let mut a = [true; 8];
        let mut b = [false; 8];
        a[4] = false;
        b[0] = true;
        let s = TableSignal::new(8).with_bool("a", a.to_vec()).with_bool("b", b.to_vec());
        assert_eq!(time_to_violation(&parse("G[0,5](a | b)").unwrap(), &s, 0), Tv::At(4));
    }

    #[test]
    fn previous_at_origin() {
        let s = sig_p(&[true, true]);
        assert!(!eval_bool(&parse("P(p)").unwrap(), &s, 0));
        assert!(eval_bool(&parse("!(P(p))").unwrap(), &s, 0));
        assert!(eval_bool(&parse("P(p)").unwrap(), &s, 1));
    }

    #[test]
    fn weak_globally_strong_eventually_past_horizon() {
        let s = sig_p(&[true, true, true]);
        assert!(eval_bool(&parse("G[1,9](p)").unwrap(), &s, 2));
        assert!(!eval_bool(&parse("F[1,9](p)").unwrap(), &s, 2));
        assert_eq!(time_to_violation(&parse("F[1,9](p)").unwrap(), &s, 2), Tv::At(2));
    }
}
