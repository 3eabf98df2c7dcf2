//! DPLL over the propositional abstraction with a caller-supplied variable
//! order. Returns partial valuations: search stops as soon as every clause is
//! decided true.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::abstraction::{add_conflict, kleene_clause, literal_value, AbstractionResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrailEntry {
    pub var: usize,
    pub value: bool,
    pub decision: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Valuation {
    pub assignments: BTreeMap<usize, bool>,
    pub decision_trail: Vec<TrailEntry>,
}

impl Valuation {
    pub fn from_pairs(pairs: &[(usize, bool)]) -> Self {
        Valuation {
            assignments: pairs.iter().copied().collect(),
            decision_trail: pairs.iter().map(|(v, b)| TrailEntry { var: *v, value: *b, decision: true }).collect(),
        }
    }

    pub fn get(&self, var: usize) -> Option<bool> {
        self.assignments.get(&var).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn decisions(&self) -> impl Iterator<Item = &TrailEntry> {
        self.decision_trail.iter().filter(|t| t.decision)
    }
}

impl std::fmt::Display for Valuation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> =
            self.assignments.iter().map(|(v, b)| format!("s{v}={}", if *b { "T" } else { "F" })).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "result", rename_all = "lowercase")]
pub enum SatResult {
    Sat(Valuation),
    Unsat,
}

impl SatResult {
    pub fn valuation(&self) -> Option<&Valuation> {
        match self {
            SatResult::Sat(v) => Some(v),
            SatResult::Unsat => None,
        }
    }
}

struct Search<'a> {
    ar: &'a AbstractionResult,
    order: &'a [usize],
    prefer: &'a dyn Fn(usize) -> bool,
}

#[derive(Clone)]
struct Node {
    assign: Vec<Option<bool>>,
    trail: Vec<TrailEntry>,
}

enum Status {
    Conflict,
    Satisfied,
    Open,
}

impl Search<'_> {
    fn status(&self, node: &mut Node) -> Status {
        loop {
            let mut progress = false;
            let mut open = false;
            for c in self.ar.all_clauses() {
                let value = |v: usize| node.assign[v];
                match kleene_clause(self.ar, c, &value) {
                    Some(true) => continue,
                    Some(false) => return Status::Conflict,
                    None => open = true,
                }
                // Unit rule on original variables: all other literals false.
                let mut unit = None;
                let mut others_false = true;
                for l in c {
                    let v = l.unsigned_abs() as usize;
                    match literal_value(self.ar, *l, &value) {
                        Some(false) => {}
                        None if !self.ar.is_aux(v) && unit.is_none() => unit = Some(*l),
                        _ => {
                            others_false = false;
                            break;
                        }
                    }
                }
                if let (Some(l), true) = (unit, others_false) {
                    let v = l.unsigned_abs() as usize;
                    node.assign[v] = Some(l > 0);
                    node.trail.push(TrailEntry { var: v, value: l > 0, decision: false });
                    progress = true;
                }
            }
            if !open {
                return Status::Satisfied;
            }
            if !progress {
                return Status::Open;
            }
        }
    }

    fn run(&self, mut node: Node) -> Option<Node> {
        match self.status(&mut node) {
            Status::Conflict => None,
            Status::Satisfied => Some(node),
            Status::Open => {
                let var = *self.order.iter().find(|v| node.assign[**v].is_none())?;
                let first = (self.prefer)(var);
                for value in [first, !first] {
                    let mut child = node.clone();
                    child.assign[var] = Some(value);
                    child.trail.push(TrailEntry { var, value, decision: true });
                    if let Some(found) = self.run(child) {
                        return Some(found);
                    }
                }
                None
            }
        }
    }
}

/// Complete `order` with any missing original variables (ascending index).
fn full_order(ar: &AbstractionResult, order: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = order.iter().copied().filter(|v| *v >= 1 && *v <= ar.num_props()).collect();
    for v in 1..=ar.num_props() {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// DPLL preferring `⊤` on every decision.
pub fn solve(ar: &AbstractionResult, order: &[usize]) -> SatResult {
    solve_with(ar, order, &|_| true)
}

/// DPLL with the first polarity of each decision given by `prefer`.
pub fn solve_with(ar: &AbstractionResult, order: &[usize], prefer: &dyn Fn(usize) -> bool) -> SatResult {
    let order = full_order(ar, order);
    let search = Search { ar, order: &order, prefer };
    let root = Node { assign: vec![None; ar.num_vars() + 1], trail: Vec::new() };
    match search.run(root) {
        Some(node) => {
            let assignments = node.trail.iter().map(|t| (t.var, t.value)).collect();
            SatResult::Sat(Valuation { assignments, decision_trail: node.trail })
        }
        None => SatResult::Unsat,
    }
}

/// Solve after banning each valuation in `banned`.
pub fn first_decision_flip(
    ar: &AbstractionResult,
    order: &[usize],
    banned: &[Valuation],
    prefer: &dyn Fn(usize) -> bool,
) -> SatResult {
    let mut ar = ar.clone();
    for b in banned {
        ar = add_conflict(&ar, b);
    }
    solve_with(&ar, order, prefer)
}

/// Sort propositions by ascending `|ρ|`, ties by index.
pub fn order_by_robustness(rho: &[(usize, f64)]) -> Vec<usize> {
    let mut v = rho.to_vec();
    v.sort_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(a.0.cmp(&b.0)));
    v.into_iter().map(|(i, _)| i).collect()
}

/// Check that a (partial) valuation decides every clause true.
pub fn satisfies(ar: &AbstractionResult, v: &Valuation) -> bool {
    let value = |x: usize| v.get(x);
    ar.all_clauses().all(|c| kleene_clause(ar, c, &value) == Some(true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::to_cnf;
    use crate::stl::Formula;

    fn raw(clauses: Vec<Vec<i64>>, n: usize) -> AbstractionResult {
        let mut ar = to_cnf(&Formula::Or((1..=n).map(|i| Formula::pred(&format!("p{i}"))).collect()));
        ar.cnf = clauses;
        ar.root_clauses = ar.cnf.len();
        ar
    }

    #[test]
    fn unit_propagation() {
        let ar = raw(vec![vec![1, 2], vec![-1]], 2);
        assert_eq!(solve(&ar, &[1, 2]), SatResult::Sat(Valuation {
            assignments: [(1, false), (2, true)].into_iter().collect(),
            decision_trail: vec![
                TrailEntry { var: 1, value: false, decision: false },
                TrailEntry { var: 2, value: true, decision: false },
            ],
        }));
    }

    #[test]
    fn contradiction() {
        let ar = raw(vec![vec![1], vec![-1]], 1);
        assert_eq!(solve(&ar, &[1]), SatResult::Unsat);
    }

    #[test]
    fn ordering_picks_first_in_order() {
        let ar = raw(vec![vec![1, 2, 3, 4, 5]], 5);
        let v = solve(&ar, &[2, 1, 5, 3, 4]);
        assert_eq!(v.valuation().unwrap().assignments, [(2, true)].into_iter().collect());
    }

    #[test]
    fn ban_then_resolve() {
        let ar = raw(vec![vec![1, 2, 3, 4, 5]], 5);
        let first = solve(&ar, &[1, 2, 3, 4, 5]).valuation().unwrap().clone();
        assert_eq!(first.assignments, [(1, true)].into_iter().collect());
        let next = first_decision_flip(&ar, &[1, 2, 3, 4, 5], &[first], &|_| true);
        assert_eq!(next.valuation().unwrap().assignments, [(1, false), (2, true)].into_iter().collect());
    }

    #[test]
    fn robustness_order_with_ties() {
        let rho = [(1, -0.351), (2, -0.971), (3, 0.2), (4, -0.2), (5, 0.5)];
        assert_eq!(order_by_robustness(&rho), vec![3, 4, 1, 5, 2]);
    }
}
