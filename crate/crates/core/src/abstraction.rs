//! Propositional abstraction of G-rooted rules: NNF, distributive
//! decomposition of `G`, proposition extraction and Tseitin CNF.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::predicates::{lookup, Category};
use crate::sat::Valuation;
use crate::stl::{to_nnf, Formula, Interval};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AbstractionError {
    #[error("formula is not in negation normal form")]
    NotInNNF,
    #[error("empty rule set")]
    NoRules,
}

/// One applied rewrite, tagged with whether it preserves semantics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Rewrite {
    pub rule: &'static str,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Proposition {
    /// 1-based; doubles as the CNF variable number.
    pub index: usize,
    #[serde(serialize_with = "display_formula")]
    pub subformula: Formula,
    pub contains_past_only: bool,
    pub predicate_categories: BTreeSet<Category>,
    /// Rules whose decomposition contains this proposition.
    pub rules: Vec<String>,
}

fn display_formula<S: serde::Serializer>(f: &Formula, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&f.to_string())
}

/// Tseitin gate `aux ⇔ op(inputs)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuxDef {
    pub var: usize,
    pub conjunction: bool,
    pub inputs: Vec<i64>,
}

pub type Clause = Vec<i64>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbstractionResult {
    /// Root clauses first, then gate definitions.
    pub cnf: Vec<Clause>,
    pub root_clauses: usize,
    pub propositions: Vec<Proposition>,
    pub tseitin_aux: BTreeSet<usize>,
    pub aux_defs: Vec<AuxDef>,
    pub learned_conflicts: Vec<Clause>,
    #[serde(skip)]
    pub nnf: Formula,
    #[serde(skip)]
    pub decomposed: Formula,
    pub rewrites: Vec<Rewrite>,
}

impl AbstractionResult {
    pub fn num_vars(&self) -> usize {
        self.propositions.len() + self.tseitin_aux.len()
    }

    pub fn num_props(&self) -> usize {
        self.propositions.len()
    }

    pub fn proposition(&self, index: usize) -> &Proposition {
        &self.propositions[index - 1]
    }

    pub fn is_aux(&self, var: usize) -> bool {
        self.tseitin_aux.contains(&var)
    }

    /// Root clauses followed by learned conflicts.
    pub fn all_clauses(&self) -> impl Iterator<Item = &Clause> {
        self.cnf.iter().chain(self.learned_conflicts.iter())
    }

    /// DIMACS text of the current instance, with the proposition map as comments.
    pub fn to_dimacs(&self) -> String {
        let mut out = String::new();
        for p in &self.propositions {
            let _ = writeln!(out, "c s{} {}", p.index, p.subformula);
        }
        for a in &self.aux_defs {
            let _ = writeln!(out, "c aux {} {}", a.var, if a.conjunction { "and" } else { "or" });
        }
        let n = self.cnf.len() + self.learned_conflicts.len();
        let _ = writeln!(out, "p cnf {} {}", self.num_vars(), n);
        for c in self.all_clauses() {
            for l in c {
                let _ = write!(out, "{l} ");
            }
            out.push_str("0\n");
        }
        out
    }

    /// Human-readable `σ_j ↦ subformula` map.
    pub fn sigma_map(&self, dt: f64) -> String {
        let mut out = String::new();
        for p in &self.propositions {
            let tag = if p.contains_past_only { " (past-only)" } else { "" };
            let _ = writeln!(out, "s{} := {}{}", p.index, p.subformula.display_with(dt), tag);
        }
        out
    }

    /// Readable `φ^P` over proposition names (auxiliaries inlined).
    pub fn propositional_string(&self) -> String {
        let lit = |l: i64| -> String {
            let v = l.unsigned_abs() as usize;
            let name = if self.is_aux(v) { self.aux_string(v) } else { format!("s{v}") };
            if l < 0 {
                format!("!{name}")
            } else {
                name
            }
        };
        self.cnf[..self.root_clauses]
            .iter()
            .map(|c| {
                let parts: Vec<String> = c.iter().map(|l| lit(*l)).collect();
                if parts.len() == 1 {
                    parts[0].clone()
                } else {
                    format!("({})", parts.join(" | "))
                }
            })
            .collect::<Vec<_>>()
            .join(" & ")
    }

    fn aux_string(&self, v: usize) -> String {
        let d = self.aux_defs.iter().find(|a| a.var == v).unwrap();
        let parts: Vec<String> = d
            .inputs
            .iter()
            .map(|l| {
                let u = l.unsigned_abs() as usize;
                if self.is_aux(u) {
                    self.aux_string(u)
                } else {
                    format!("s{u}")
                }
            })
            .collect();
        format!("({})", parts.join(if d.conjunction { " & " } else { " | " }))
    }
}

/// Append the clause that forbids `valuation`.
pub fn add_conflict(ar: &AbstractionResult, valuation: &Valuation) -> AbstractionResult {
    let mut out = ar.clone();
    let clause: Clause = valuation
        .assignments
        .iter()
        .filter(|(v, _)| !ar.is_aux(**v))
        .map(|(v, b)| if *b { -(*v as i64) } else { *v as i64 })
        .collect();
    out.learned_conflicts.push(clause);
    out
}

/// Distribute outer `G` over the Boolean structure beneath it. The result
/// entails the input; its leaves are G-scoped units.
pub fn decompose(f: &Formula) -> Result<Formula, AbstractionError> {
    decompose_tagged(f).map(|(d, _)| d)
}

pub fn decompose_tagged(f: &Formula) -> Result<(Formula, Vec<Rewrite>), AbstractionError> {
    if !f.is_nnf() {
        return Err(AbstractionError::NotInNNF);
    }
    let mut tags = Vec::new();
    let d = boolean_level(f, &mut tags);
    Ok((d, tags))
}

fn boolean_level(f: &Formula, tags: &mut Vec<Rewrite>) -> Formula {
    match f {
        Formula::And(xs) => flatten(true, xs.iter().map(|x| boolean_level(x, tags)).collect()),
        Formula::Or(xs) => flatten(false, xs.iter().map(|x| boolean_level(x, tags)).collect()),
        Formula::Globally(g, iv) => distribute_globally(g, *iv, tags),
        other => inner(other, tags),
    }
}

fn distribute_globally(g: &Formula, iv: Interval, tags: &mut Vec<Rewrite>) -> Formula {
    match g {
        Formula::And(xs) => {
            tags.push(Rewrite { rule: "G over and", exact: true });
            flatten(true, xs.iter().map(|x| distribute_globally(x, iv, tags)).collect())
        }
        Formula::Or(xs) => {
            tags.push(Rewrite { rule: "G over or", exact: false });
            flatten(false, xs.iter().map(|x| distribute_globally(x, iv, tags)).collect())
        }
        Formula::Globally(h, inner_iv) if iv.is_unbounded_from_zero() && inner_iv.is_unbounded_from_zero() => {
            tags.push(Rewrite { rule: "G G collapse", exact: true });
            distribute_globally(h, iv, tags)
        }
        Formula::True => Formula::True,
        Formula::False if iv.lo == 0 => Formula::False,
        other => Formula::Globally(Box::new(inner(other, tags)), iv),
    }
}

/// Exact rewrites inside a unit: `H` and `G` over conjunction.
fn inner(f: &Formula, tags: &mut Vec<Rewrite>) -> Formula {
    let rec = |x: &Formula, tags: &mut Vec<Rewrite>| Box::new(inner(x, tags));
    match f {
        Formula::Historically(g, iv) | Formula::Globally(g, iv) => {
            let past = matches!(f, Formula::Historically(..));
            let wrap = |x: Formula| if past { Formula::Historically(Box::new(x), *iv) } else { Formula::Globally(Box::new(x), *iv) };
            match g.as_ref() {
                Formula::And(xs) => {
                    tags.push(Rewrite { rule: if past { "H over and" } else { "G over and" }, exact: true });
                    Formula::And(xs.iter().map(|x| inner(&wrap(x.clone()), tags)).collect())
                }
                _ => wrap(inner(g, tags)),
            }
        }
        Formula::And(xs) => Formula::And(xs.iter().map(|x| inner(x, tags)).collect()),
        Formula::Or(xs) => Formula::Or(xs.iter().map(|x| inner(x, tags)).collect()),
        Formula::Eventually(g, iv) => Formula::Eventually(rec(g, tags), *iv),
        Formula::Once(g, iv) => Formula::Once(rec(g, tags), *iv),
        Formula::Previous(g) => Formula::Previous(rec(g, tags)),
        Formula::Not(g) => Formula::Not(rec(g, tags)),
        Formula::Until { lhs, rhs, interval } => Formula::Until { lhs: rec(lhs, tags), rhs: rec(rhs, tags), interval: *interval },
        Formula::Since { lhs, rhs, interval } => Formula::Since { lhs: rec(lhs, tags), rhs: rec(rhs, tags), interval: *interval },
        Formula::Release { lhs, rhs, interval } => Formula::Release { lhs: rec(lhs, tags), rhs: rec(rhs, tags), interval: *interval },
        Formula::Trigger { lhs, rhs, interval } => Formula::Trigger { lhs: rec(lhs, tags), rhs: rec(rhs, tags), interval: *interval },
        leaf => leaf.clone(),
    }
}

/// Flatten nested same-kind connectives and fold constants.
fn flatten(conj: bool, xs: Vec<Formula>) -> Formula {
    let mut out = Vec::new();
    for x in xs {
        match x {
            Formula::And(ys) if conj => out.extend(ys),
            Formula::Or(ys) if !conj => out.extend(ys),
            Formula::True if conj => {}
            Formula::False if !conj => {}
            Formula::True => return Formula::True,
            Formula::False => return Formula::False,
            other => out.push(other),
        }
    }
    match out.len() {
        0 => {
            if conj {
                Formula::True
            } else {
                Formula::False
            }
        }
        1 => out.pop().unwrap(),
        _ => {
            if conj {
                Formula::And(out)
            } else {
                Formula::Or(out)
            }
        }
    }
}

/// True when every predicate in `f` sits under a past-time operator.
pub fn is_past_only(f: &Formula) -> bool {
    fn walk(f: &Formula, under_past: bool) -> bool {
        match f {
            Formula::Predicate { .. } => under_past,
            Formula::Once(..) | Formula::Historically(..) | Formula::Previous(..) | Formula::Since { .. } | Formula::Trigger { .. } => {
                f.children().into_iter().all(|c| walk(c, true))
            }
            _ => f.children().into_iter().all(|c| walk(c, under_past)),
        }
    }
    !f.predicate_ids().is_empty() && walk(f, false)
}

fn categories(f: &Formula) -> BTreeSet<Category> {
    f.predicate_ids().iter().filter_map(|p| lookup(p).ok()).map(|d| d.category).collect()
}

/// Leaves of a decomposed formula in first-occurrence order.
fn collect_leaves(f: &Formula, out: &mut Vec<Formula>) {
    match f {
        Formula::And(xs) | Formula::Or(xs) => xs.iter().for_each(|x| collect_leaves(x, out)),
        Formula::True | Formula::False => {}
        leaf => {
            if !out.contains(leaf) {
                out.push(leaf.clone());
            }
        }
    }
}

struct CnfBuilder<'a> {
    index: &'a BTreeMap<Formula, usize>,
    next: usize,
    roots: Vec<Clause>,
    clauses: Vec<Clause>,
    aux: Vec<AuxDef>,
}

impl CnfBuilder<'_> {
    /// Literal standing for `f`; introduces a gate for non-leaf nodes.
    fn literal(&mut self, f: &Formula) -> i64 {
        match f {
            Formula::And(xs) | Formula::Or(xs) => {
                let conj = matches!(f, Formula::And(_));
                let inputs: Vec<i64> = xs.iter().map(|x| self.literal(x)).collect();
                let v = self.next;
                self.next += 1;
                let x = v as i64;
                if conj {
                    for i in &inputs {
                        self.clauses.push(vec![-x, *i]);
                    }
                    let mut c: Clause = inputs.iter().map(|i| -i).collect();
                    c.push(x);
                    self.clauses.push(c);
                } else {
                    let mut c: Clause = vec![-x];
                    c.extend(inputs.iter().copied());
                    self.clauses.push(c);
                    for i in &inputs {
                        self.clauses.push(vec![x, -i]);
                    }
                }
                self.aux.push(AuxDef { var: v, conjunction: conj, inputs });
                x
            }
            leaf => self.index[leaf] as i64,
        }
    }

    /// Clause for a disjunction at the top level: literal disjuncts are used
    /// directly, non-literal ones get a gate.
    fn clause(&mut self, f: &Formula) {
        match f {
            Formula::Or(xs) => {
                let c = xs.iter().map(|x| self.literal(x)).collect();
                self.roots.push(c);
            }
            Formula::True => {}
            Formula::False => self.roots.push(Vec::new()),
            other => {
                let l = self.literal(other);
                self.roots.push(vec![l]);
            }
        }
    }
}

/// Tseitin CNF of a decomposed formula.
pub fn to_cnf(decomposed: &Formula) -> AbstractionResult {
    let mut leaves = Vec::new();
    collect_leaves(decomposed, &mut leaves);
    let index: BTreeMap<Formula, usize> = leaves.iter().cloned().enumerate().map(|(i, f)| (f, i + 1)).collect();
    let mut b = CnfBuilder { index: &index, next: leaves.len() + 1, roots: Vec::new(), clauses: Vec::new(), aux: Vec::new() };
    match decomposed {
        Formula::And(xs) => xs.iter().for_each(|x| b.clause(x)),
        other => b.clause(other),
    }
    let propositions = leaves
        .into_iter()
        .enumerate()
        .map(|(i, f)| Proposition {
            index: i + 1,
            contains_past_only: is_past_only(&f),
            predicate_categories: categories(&f),
            subformula: f,
            rules: Vec::new(),
        })
        .collect();
    let root_clauses = b.roots.len();
    let mut cnf = b.roots;
    cnf.extend(b.clauses);
    AbstractionResult {
        cnf,
        root_clauses,
        propositions,
        tseitin_aux: b.aux.iter().map(|a| a.var).collect(),
        aux_defs: b.aux,
        learned_conflicts: Vec::new(),
        nnf: decomposed.clone(),
        decomposed: decomposed.clone(),
        rewrites: Vec::new(),
    }
}

/// Full pipeline for a conjunction of rules, annotating each proposition with
/// the rules it came from.
pub fn abstract_rules(rules: &[(String, Formula)]) -> Result<AbstractionResult, AbstractionError> {
    if rules.is_empty() {
        return Err(AbstractionError::NoRules);
    }
    let conj = crate::stl::conjoin_rules(rules);
    let nnf = to_nnf(&conj);
    let (decomposed, rewrites) = decompose_tagged(&nnf)?;
    let mut ar = to_cnf(&decomposed);
    ar.nnf = nnf;
    ar.rewrites = rewrites;
    for (name, f) in rules {
        let d = decompose(&to_nnf(f))?;
        let mut leaves = Vec::new();
        collect_leaves(&d, &mut leaves);
        for p in ar.propositions.iter_mut() {
            if leaves.contains(&p.subformula) {
                p.rules.push(name.clone());
            }
        }
    }
    Ok(ar)
}

/// Evaluate a (possibly partial) assignment of original variables against a
/// clause set, resolving auxiliaries through their gate definitions.
/// `Some(b)` when the value is fixed regardless of unassigned variables.
pub fn kleene_clause(ar: &AbstractionResult, clause: &Clause, value: &dyn Fn(usize) -> Option<bool>) -> Option<bool> {
    let mut unknown = false;
    for l in clause {
        match literal_value(ar, *l, value) {
            Some(true) => return Some(true),
            Some(false) => {}
            None => unknown = true,
        }
    }
    if unknown {
        None
    } else {
        Some(false)
    }
}

pub fn literal_value(ar: &AbstractionResult, l: i64, value: &dyn Fn(usize) -> Option<bool>) -> Option<bool> {
    let v = l.unsigned_abs() as usize;
    let raw = if ar.is_aux(v) {
        let d = ar.aux_defs.iter().find(|a| a.var == v).unwrap();
        let mut unknown = false;
        let mut decided = None;
        for i in &d.inputs {
            match literal_value(ar, *i, value) {
                Some(b) if b != d.conjunction => {
                    decided = Some(b);
                    break;
                }
                Some(_) => {}
                None => unknown = true,
            }
        }
        match decided {
            Some(b) => Some(b),
            None if unknown => None,
            None => Some(d.conjunction),
        }
    } else {
        value(v)
    };
    raw.map(|b| if l < 0 { !b } else { b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predicates::RuleLibrary;

    #[test]
    fn in1_is_one_clause_of_five() {
        let lib = RuleLibrary::bundled(0.2);
        let ar = abstract_rules(&lib.select(&["IN1".into()]).unwrap()).unwrap();
        assert_eq!(ar.num_props(), 5);
        assert_eq!(ar.cnf, vec![vec![1, 2, 3, 4, 5]]);
        assert!(ar.proposition(1).contains_past_only);
        assert!(!ar.proposition(2).contains_past_only);
        assert!(ar.proposition(5).contains_past_only);
    }

    #[test]
    fn g1_g3_structure() {
        let lib = RuleLibrary::bundled(0.2);
        let ar = abstract_rules(&lib.select(&["G1".into(), "G3".into()]).unwrap()).unwrap();
        assert_eq!(ar.num_props(), 8);
        assert_eq!(ar.cnf, vec![vec![1, 2, 3, 4], vec![5], vec![6], vec![7], vec![8]]);
        assert!(ar.tseitin_aux.is_empty());
        assert_eq!(ar.proposition(4).rules, vec!["G1".to_string()]);
    }

    #[test]
    fn conflict_clause_negates_valuation() {
        let lib = RuleLibrary::bundled(0.2);
        let ar = abstract_rules(&lib.select(&["IN1".into()]).unwrap()).unwrap();
        let v = Valuation::from_pairs(&[(1, false), (2, true)]);
        let ar = add_conflict(&ar, &v);
        assert_eq!(ar.learned_conflicts, vec![vec![1, -2]]);
    }
}
