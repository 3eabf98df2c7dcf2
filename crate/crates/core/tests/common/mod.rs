#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand::Rng;
use rulerepair::abstraction::AbstractionResult;
use rulerepair::stl::{Formula, Interval, SignalView, TableSignal, Tv};

pub const PREDS: [&str; 3] = ["p", "q", "r"];

pub fn random_interval<R: Rng>(rng: &mut R) -> Interval {
    let lo = rng.gen_range(0..=3);
    if rng.gen_bool(0.2) {
        Interval { lo, hi: None }
    } else {
        Interval::new(lo, lo + rng.gen_range(0..=5))
    }
}

pub fn random_leaf<R: Rng>(rng: &mut R) -> Formula {
    match rng.gen_range(0..20) {
        0 => Formula::True,
        1 => Formula::False,
        _ => Formula::Predicate { id: PREDS.choose(rng).unwrap().to_string(), negated: rng.gen_bool(0.3) },
    }
}

/// Random formula of depth at most `depth` over every operator.
pub fn random_formula<R: Rng>(rng: &mut R, depth: usize) -> Formula {
    if depth == 0 || rng.gen_bool(0.2) {
        return random_leaf(rng);
    }
    let sub = |rng: &mut R| Box::new(random_formula(rng, depth - 1));
    match rng.gen_range(0..13) {
        0 => Formula::Not(sub(rng)),
        1 => Formula::And((0..rng.gen_range(2..=3)).map(|_| random_formula(rng, depth - 1)).collect()),
        2 => Formula::Or((0..rng.gen_range(2..=3)).map(|_| random_formula(rng, depth - 1)).collect()),
        3 => Formula::Globally(sub(rng), random_interval(rng)),
        4 => Formula::Eventually(sub(rng), random_interval(rng)),
        5 => Formula::Once(sub(rng), random_interval(rng)),
        6 => Formula::Historically(sub(rng), random_interval(rng)),
        7 => Formula::Previous(sub(rng)),
        8 => Formula::Until { lhs: sub(rng), rhs: sub(rng), interval: random_interval(rng) },
        9 => Formula::Since { lhs: sub(rng), rhs: sub(rng), interval: random_interval(rng) },
        10 => Formula::Release { lhs: sub(rng), rhs: sub(rng), interval: random_interval(rng) },
        11 => Formula::Trigger { lhs: sub(rng), rhs: sub(rng), interval: random_interval(rng) },
        _ => Formula::Globally(sub(rng), Interval::UNBOUNDED),
    }
}

/// Robustness columns with magnitudes in `[0.01, 1]`.
pub fn random_signal<R: Rng>(rng: &mut R, len: usize) -> TableSignal {
    let mut sig = TableSignal::new(len);
    for p in PREDS {
        let col = (0..len)
            .map(|_| {
                let m = rng.gen_range(0.01..=1.0);
                if rng.gen_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect();
        sig = sig.with_rob(p, col);
    }
    sig
}

fn fwd(k: usize, iv: &Interval, h: usize) -> Vec<usize> {
    let a = k + iv.lo;
    let b = match iv.hi {
        Some(hi) => (k + hi).min(h),
        None => h,
    };
    (a..=b).collect()
}

fn back(k: usize, iv: &Interval) -> Vec<usize> {
    if iv.lo > k {
        return Vec::new();
    }
    let a = match iv.hi {
        Some(hi) => k.saturating_sub(hi),
        None => 0,
    };
    (a..=k - iv.lo).collect()
}

/// Direct Boolean semantics.
pub fn oracle_bool(f: &Formula, s: &dyn SignalView, k: usize) -> bool {
    let h = s.len() - 1;
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Predicate { id, negated } => s.eval(id, k) != *negated,
        Formula::Not(g) => !oracle_bool(g, s, k),
        Formula::And(xs) => xs.iter().all(|x| oracle_bool(x, s, k)),
        Formula::Or(xs) => xs.iter().any(|x| oracle_bool(x, s, k)),
        Formula::Globally(g, iv) => fwd(k, iv, h).into_iter().all(|t| oracle_bool(g, s, t)),
        Formula::Eventually(g, iv) => fwd(k, iv, h).into_iter().any(|t| oracle_bool(g, s, t)),
        Formula::Historically(g, iv) => back(k, iv).into_iter().all(|t| oracle_bool(g, s, t)),
        Formula::Once(g, iv) => back(k, iv).into_iter().any(|t| oracle_bool(g, s, t)),
        Formula::Previous(g) => k > 0 && oracle_bool(g, s, k - 1),
        Formula::Until { lhs, rhs, interval } => fwd(k, interval, h)
            .into_iter()
            .any(|t| oracle_bool(rhs, s, t) && (k..t).all(|u| oracle_bool(lhs, s, u))),
        Formula::Release { lhs, rhs, interval } => fwd(k, interval, h)
            .into_iter()
            .all(|t| oracle_bool(rhs, s, t) || (k..t).any(|u| oracle_bool(lhs, s, u))),
        Formula::Since { lhs, rhs, interval } => back(k, interval)
            .into_iter()
            .any(|t| oracle_bool(rhs, s, t) && (t + 1..=k).all(|u| oracle_bool(lhs, s, u))),
        Formula::Trigger { lhs, rhs, interval } => back(k, interval)
            .into_iter()
            .all(|t| oracle_bool(rhs, s, t) || (t + 1..=k).any(|u| oracle_bool(lhs, s, u))),
    }
}

fn max_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(f64::INFINITY, f64::min)
}

fn rob_raw(f: &Formula, s: &dyn SignalView, k: usize) -> f64 {
    let h = s.len() - 1;
    match f {
        Formula::True => f64::INFINITY,
        Formula::False => f64::NEG_INFINITY,
        Formula::Predicate { id, negated } => {
            if *negated {
                -s.rob(id, k)
            } else {
                s.rob(id, k)
            }
        }
        Formula::Not(g) => -rob_raw(g, s, k),
        Formula::And(xs) => min_of(xs.iter().map(|x| rob_raw(x, s, k))),
        Formula::Or(xs) => max_of(xs.iter().map(|x| rob_raw(x, s, k))),
        Formula::Globally(g, iv) => min_of(fwd(k, iv, h).into_iter().map(|t| rob_raw(g, s, t))),
        Formula::Eventually(g, iv) => max_of(fwd(k, iv, h).into_iter().map(|t| rob_raw(g, s, t))),
        Formula::Historically(g, iv) => min_of(back(k, iv).into_iter().map(|t| rob_raw(g, s, t))),
        Formula::Once(g, iv) => max_of(back(k, iv).into_iter().map(|t| rob_raw(g, s, t))),
        Formula::Previous(g) => {
            if k == 0 {
                f64::NEG_INFINITY
            } else {
                rob_raw(g, s, k - 1)
            }
        }
        Formula::Until { lhs, rhs, interval } => max_of(
            fwd(k, interval, h)
                .into_iter()
                .map(|t| rob_raw(rhs, s, t).min(min_of((k..t).map(|u| rob_raw(lhs, s, u))))),
        ),
        Formula::Release { lhs, rhs, interval } => min_of(
            fwd(k, interval, h)
                .into_iter()
                .map(|t| rob_raw(rhs, s, t).max(max_of((k..t).map(|u| rob_raw(lhs, s, u))))),
        ),
        Formula::Since { lhs, rhs, interval } => max_of(
            back(k, interval)
                .into_iter()
                .map(|t| rob_raw(rhs, s, t).min(min_of((t + 1..=k).map(|u| rob_raw(lhs, s, u))))),
        ),
        Formula::Trigger { lhs, rhs, interval } => min_of(
            back(k, interval)
                .into_iter()
                .map(|t| rob_raw(rhs, s, t).max(max_of((t + 1..=k).map(|u| rob_raw(lhs, s, u))))),
        ),
    }
}

/// Max/min robustness with exact zeros replaced by `±1e-9`.
pub fn oracle_rob(f: &Formula, s: &dyn SignalView, k: usize) -> f64 {
    let r = rob_raw(f, s, k);
    if r == 0.0 {
        if oracle_bool(f, s, k) {
            1e-9
        } else {
            -1e-9
        }
    } else {
        r
    }
}

/// Negation pushed to the leaves by operator duality.
pub fn oracle_nnf(f: &Formula, neg: bool) -> Formula {
    let b = |g: &Formula, n: bool| Box::new(oracle_nnf(g, n));
    match f {
        Formula::True | Formula::False => {
            if matches!(f, Formula::True) != neg {
                Formula::True
            } else {
                Formula::False
            }
        }
        Formula::Predicate { id, negated } => Formula::Predicate { id: id.clone(), negated: negated ^ neg },
        Formula::Not(g) => oracle_nnf(g, !neg),
        Formula::And(xs) | Formula::Or(xs) => {
            let items = xs.iter().map(|x| oracle_nnf(x, neg)).collect();
            if matches!(f, Formula::And(_)) != neg {
                Formula::And(items)
            } else {
                Formula::Or(items)
            }
        }
        Formula::Globally(g, iv) if neg => Formula::Eventually(b(g, true), *iv),
        Formula::Globally(g, iv) => Formula::Globally(b(g, false), *iv),
        Formula::Eventually(g, iv) if neg => Formula::Globally(b(g, true), *iv),
        Formula::Eventually(g, iv) => Formula::Eventually(b(g, false), *iv),
        Formula::Historically(g, iv) if neg => Formula::Once(b(g, true), *iv),
        Formula::Historically(g, iv) => Formula::Historically(b(g, false), *iv),
        Formula::Once(g, iv) if neg => Formula::Historically(b(g, true), *iv),
        Formula::Once(g, iv) => Formula::Once(b(g, false), *iv),
        Formula::Previous(g) if neg => Formula::Historically(b(g, true), Interval::new(1, 1)),
        Formula::Previous(g) => Formula::Previous(b(g, false)),
        Formula::Until { lhs, rhs, interval } if neg => Formula::Release { lhs: b(lhs, true), rhs: b(rhs, true), interval: *interval },
        Formula::Until { lhs, rhs, interval } => Formula::Until { lhs: b(lhs, false), rhs: b(rhs, false), interval: *interval },
        Formula::Release { lhs, rhs, interval } if neg => Formula::Until { lhs: b(lhs, true), rhs: b(rhs, true), interval: *interval },
        Formula::Release { lhs, rhs, interval } => Formula::Release { lhs: b(lhs, false), rhs: b(rhs, false), interval: *interval },
        Formula::Since { lhs, rhs, interval } if neg => Formula::Trigger { lhs: b(lhs, true), rhs: b(rhs, true), interval: *interval },
        Formula::Since { lhs, rhs, interval } => Formula::Since { lhs: b(lhs, false), rhs: b(rhs, false), interval: *interval },
        Formula::Trigger { lhs, rhs, interval } if neg => Formula::Since { lhs: b(lhs, true), rhs: b(rhs, true), interval: *interval },
        Formula::Trigger { lhs, rhs, interval } => Formula::Trigger { lhs: b(lhs, false), rhs: b(rhs, false), interval: *interval },
    }
}

/// Time-to-violation recursion on NNF: a violated leaf yields its own step,
/// `∨` and existential windows take the latest, `∧` and universal windows
/// the earliest. An existential window with no step left (future) fails at
/// the horizon; a missing past fails at `k`.
fn tv_nnf(f: &Formula, s: &dyn SignalView, k: usize) -> Tv {
    let h = s.len() - 1;
    let latest = |it: &mut dyn Iterator<Item = Tv>, empty: Tv| it.max().unwrap_or(empty);
    let earliest = |it: &mut dyn Iterator<Item = Tv>| it.min().unwrap_or(Tv::Inf);
    match f {
        Formula::True => Tv::Inf,
        Formula::False => Tv::At(k),
        Formula::Predicate { id, negated } => {
            if s.eval(id, k) != *negated {
                Tv::Inf
            } else {
                Tv::At(k)
            }
        }
        Formula::Not(_) => panic!("oracle expects NNF"),
        Formula::And(xs) => earliest(&mut xs.iter().map(|x| tv_nnf(x, s, k))),
        Formula::Or(xs) => latest(&mut xs.iter().map(|x| tv_nnf(x, s, k)), Tv::At(k)),
        Formula::Globally(g, iv) => earliest(&mut fwd(k, iv, h).into_iter().map(|t| tv_nnf(g, s, t))),
        Formula::Eventually(g, iv) => latest(&mut fwd(k, iv, h).into_iter().map(|t| tv_nnf(g, s, t)), Tv::At(h)),
        Formula::Historically(g, iv) => earliest(&mut back(k, iv).into_iter().map(|t| tv_nnf(g, s, t))),
        Formula::Once(g, iv) => latest(&mut back(k, iv).into_iter().map(|t| tv_nnf(g, s, t)), Tv::At(k)),
        Formula::Previous(g) => {
            if k == 0 {
                Tv::At(0)
            } else {
                tv_nnf(g, s, k - 1)
            }
        }
        Formula::Until { lhs, rhs, interval } => latest(
            &mut fwd(k, interval, h)
                .into_iter()
                .map(|t| (k..t).map(|u| tv_nnf(lhs, s, u)).fold(tv_nnf(rhs, s, t), Tv::min)),
            Tv::At(h),
        ),
        Formula::Release { lhs, rhs, interval } => earliest(
            &mut fwd(k, interval, h)
                .into_iter()
                .map(|t| (k..t).map(|u| tv_nnf(lhs, s, u)).fold(tv_nnf(rhs, s, t), Tv::max)),
        ),
        Formula::Since { lhs, rhs, interval } => latest(
            &mut back(k, interval)
                .into_iter()
                .map(|t| (t + 1..=k).map(|u| tv_nnf(lhs, s, u)).fold(tv_nnf(rhs, s, t), Tv::min)),
            Tv::At(k),
        ),
        Formula::Trigger { lhs, rhs, interval } => earliest(
            &mut back(k, interval)
                .into_iter()
                .map(|t| (t + 1..=k).map(|u| tv_nnf(lhs, s, u)).fold(tv_nnf(rhs, s, t), Tv::max)),
        ),
    }
}

pub fn oracle_tv(f: &Formula, s: &dyn SignalView, k: usize) -> Tv {
    tv_nnf(&oracle_nnf(f, false), s, k)
}

/// Disagreements between the library and the oracles on one instance.
pub fn stl_mismatches(f: &Formula, s: &TableSignal) -> Vec<String> {
    use rulerepair::stl::{eval_bool, robustness, time_to_violation};
    let mut out = Vec::new();
    for k in 0..s.len() {
        let (b, ob) = (eval_bool(f, s, k), oracle_bool(f, s, k));
        if b != ob {
            out.push(format!("eval_bool at {k}: {b} vs {ob} for {f}"));
        }
        let (r, or) = (robustness(f, s, k), oracle_rob(f, s, k));
        if r != or {
            out.push(format!("robustness at {k}: {r} vs {or} for {f}"));
        }
        let (t, ot) = (time_to_violation(f, s, k), oracle_tv(f, s, k));
        if t != ot {
            out.push(format!("tv at {k}: {t} vs {ot} for {f}"));
        }
    }
    out
}

/// Sign agreement of robustness with the Boolean verdict; also TV = ∞ iff satisfied.
pub fn sign_violations(f: &Formula, s: &TableSignal) -> usize {
    use rulerepair::stl::{eval_bool, robustness, time_to_violation};
    (0..s.len())
        .filter(|&k| {
            let b = eval_bool(f, s, k);
            let r = robustness(f, s, k);
            (r > 0.0) != b || r == 0.0 || time_to_violation(f, s, k).is_inf() != b
        })
        .count()
}

/// Brute-force satisfiability of a clause set over `n` variables.
pub fn truth_table_sat(clauses: &[Vec<i64>], n: usize) -> bool {
    (0u32..1 << n).any(|m| {
        clauses.iter().all(|c| {
            c.iter().any(|&l| {
                let bit = m >> (l.unsigned_abs() - 1) & 1 == 1;
                if l > 0 {
                    bit
                } else {
                    !bit
                }
            })
        })
    })
}

/// Random CNF over at most `max_vars` variables.
pub fn random_cnf<R: Rng>(rng: &mut R, max_vars: usize) -> (Vec<Vec<i64>>, usize) {
    let n = rng.gen_range(1..=max_vars);
    let m = rng.gen_range(1..=(4 * n + 2));
    let clauses = (0..m)
        .map(|_| {
            let w = rng.gen_range(1..=3.min(n));
            (0..w)
                .map(|_| {
                    let v = rng.gen_range(1..=n) as i64;
                    if rng.gen_bool(0.5) {
                        v
                    } else {
                        -v
                    }
                })
                .collect()
        })
        .collect();
    (clauses, n)
}

/// Abstraction shell around a raw clause set, every variable a proposition.
pub fn raw_instance(clauses: Vec<Vec<i64>>, n: usize) -> AbstractionResult {
    let mut ar = rulerepair::abstraction::to_cnf(&Formula::Or((1..=n).map(|i| Formula::pred(&format!("x{i}"))).collect()));
    ar.cnf = clauses;
    ar.root_clauses = ar.cnf.len();
    ar
}

/// Every clause has a literal made true by the assigned variables.
pub fn model_satisfies(clauses: &[Vec<i64>], value: impl Fn(usize) -> Option<bool>) -> bool {
    clauses
        .iter()
        .all(|c| c.iter().any(|&l| value(l.unsigned_abs() as usize) == Some(l > 0)))
}

use rulerepair::predicates::monitor_signal;
use rulerepair::reach::ReachSet;
use rulerepair::sat::Valuation;
use rulerepair::world_model::{step_dynamics, Input, Scenario, Trajectory};

/// Random continuation from `k_cut`: a jerk-limited tracker chasing
/// piecewise-constant or speed-proportional braking targets, or raw random snap.
pub fn random_continuation<R: Rng>(rng: &mut R, sc: &Scenario, k_cut: usize) -> Trajectory {
    let base = &sc.ego_trajectory;
    let h = base.horizon();
    let (xb, ub, dt) = (&sc.state_bounds, &sc.input_bounds, sc.dt);
    let raw = rng.gen_bool(0.2);
    let gain = rng.gen_range(0.5..3.0);
    // Stopping mode: chase `max(floor, -c·ṡ)` so speed decays towards zero.
    let stop = (!raw && rng.gen_bool(0.5)).then(|| (rng.gen_range(xb.s_ddot.lo..=xb.s_ddot.lo + 4.0), rng.gen_range(0.3..6.0)));
    let mut target = 0.0;
    let mut lat_target = 0.0;
    let mut x = base.states[k_cut];
    let mut inputs = base.inputs[..k_cut].to_vec();
    for k in k_cut..h {
        if k == k_cut || rng.gen_bool(0.15) {
            target = match rng.gen_range(0..3) {
                0 => rng.gen_range(xb.s_ddot.lo..=xb.s_ddot.hi),
                1 => rng.gen_range(xb.s_ddot.lo..=0.0),
                _ => rng.gen_range(xb.s_ddot.lo..=xb.s_ddot.lo + 1.5),
            };
            lat_target = rng.gen_range(-0.3..=0.3);
        }
        let u = if raw {
            Input { u_long: rng.gen_range(ub.u_long.lo..=ub.u_long.hi), u_lat: rng.gen_range(ub.u_lat.lo..=ub.u_lat.hi) }
        } else {
            let goal = match stop {
                Some((floor, c)) => (-c * x.s_dot).max(floor),
                None => target,
            };
            let jt = xb.s_dddot.clamp((goal - x.s_ddot) / (gain * dt));
            Input {
                u_long: ub.u_long.clamp((jt - x.s_dddot) / dt),
                u_lat: ub.u_lat.clamp((lat_target - x.d_dot) / dt),
            }
        };
        x = step_dynamics(&x, &u, dt);
        inputs.push(u);
    }
    Trajectory::rollout_from(&base.states[..=k_cut], &inputs, dt)
}

/// Random perturbation of the inputs of `anchor` after `k_cut`.
pub fn perturbed_continuation<R: Rng>(rng: &mut R, sc: &Scenario, anchor: &Trajectory, k_cut: usize) -> Trajectory {
    let scale = [0.3, 1.0, 3.0, 10.0, 30.0][rng.gen_range(0..5)];
    let ub = &sc.input_bounds;
    let mut inputs = anchor.inputs.clone();
    for u in inputs.iter_mut().skip(k_cut) {
        u.u_long = ub.u_long.clamp(u.u_long + scale * rng.gen_range(-1.0..=1.0));
        u.u_lat = ub.u_lat.clamp(u.u_lat + scale * 0.1 * rng.gen_range(-1.0..=1.0));
    }
    Trajectory::rollout_from(&sc.ego_trajectory.states[..=k_cut], &inputs, sc.dt)
}

/// Admissible and collision-free from `k_cut`, and every enforced `⊤`
/// proposition `G(body)` holds on `[tv, h]` according to the monitor.
pub fn certified(
    sc: &Scenario,
    traj: &Trajectory,
    k_cut: usize,
    ar: &AbstractionResult,
    valuation: &Valuation,
    tv: usize,
) -> bool {
    let tol = 1e-9;
    for (k, x) in traj.states.iter().enumerate().skip(k_cut) {
        if !sc.state_bounds.admits(x, tol) || (sc.forward_only && x.s_dot < 0.0) || !sc.on_road(x) || sc.collides(k, x) {
            return false;
        }
    }
    if traj.inputs.iter().skip(k_cut).any(|u| !sc.input_bounds.admits(u, tol)) {
        return false;
    }
    for (&j, &b) in &valuation.assignments {
        if !b || ar.is_aux(j) {
            continue;
        }
        let p = ar.proposition(j);
        if p.contains_past_only {
            continue;
        }
        let Formula::Globally(_, iv) = &p.subformula else { continue };
        if !iv.is_unbounded_from_zero() {
            continue;
        }
        let sig = monitor_signal(&p.subformula.predicate_ids(), sc, traj).expect("monitor");
        if !rulerepair::stl::eval_bool(&p.subformula, &sig, tv) {
            return false;
        }
    }
    true
}

pub struct ReachCheck {
    pub accepted: usize,
    pub attempts: usize,
    pub escapes: Vec<String>,
}

/// Sample (tracker rollouts and perturbations of `anchor`) until `want` certified continuations are found (or the attempt
/// cap is hit) and check each lies in the reachable set at every step.
pub fn reach_soundness(
    sc: &Scenario,
    rs: &ReachSet,
    ar: &AbstractionResult,
    valuation: &Valuation,
    anchor: &Trajectory,
    want: usize,
    seed: u64,
) -> ReachCheck {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = ReachCheck { accepted: 0, attempts: 0, escapes: Vec::new() };
    while out.accepted < want && out.attempts < want * 4000 {
        out.attempts += 1;
        let t = if rng.gen_bool(0.5) {
            random_continuation(&mut rng, sc, rs.k_cut)
        } else {
            perturbed_continuation(&mut rng, sc, anchor, rs.k_cut)
        };
        if !certified(sc, &t, rs.k_cut, ar, valuation, rs.tv) {
            continue;
        }
        out.accepted += 1;
        for tau in rs.k_cut..=rs.last_step() {
            if !rs.contains(tau, &t.states[tau], 1e-6) {
                let x = t.states[tau];
                out.escapes.push(format!("{}: step {tau} s={} v={} d={}", sc.name, x.s, x.s_dot, x.d));
                break;
            }
        }
    }
    out
}

use rulerepair::criticality::{all_maneuver_starts, requirement, select_maneuvers, splice_maneuver, trace_valuation, ManeuverKind};
use rulerepair::engine::{RepairOutcome, RepairReport};
use rulerepair::repair_opt::splice_and_verify;
use rulerepair::stl::conjoin_rules;
use rulerepair::RuleLibrary;

pub fn rule_formula(sc: &Scenario, names: &[String]) -> Formula {
    conjoin_rules(&RuleLibrary::bundled(sc.dt).select(names).expect("rules"))
}

/// Independent acceptance of a repaired trajectory: prefix bit-equal up to
/// `k_cut`, dynamics residual, admissibility, no collision and the oracle
/// time-to-violation of the rule conjunction is infinite.
pub fn check_repaired(sc: &Scenario, report: &RepairReport) -> Result<(), String> {
    let Some(rep) = report.outcome.repaired() else { return Ok(()) };
    let t = &rep.trajectory;
    if t.states.len() != sc.ego_trajectory.states.len() {
        return Err(format!("{}: length {}", sc.name, t.states.len()));
    }
    if t.states[..=rep.k_cut] != sc.ego_trajectory.states[..=rep.k_cut] {
        return Err(format!("{}: prefix differs before k_cut {}", sc.name, rep.k_cut));
    }
    let res = t.dynamics_residual(sc.dt);
    if res > 1e-6 {
        return Err(format!("{}: dynamics residual {res}", sc.name));
    }
    for (k, x) in t.states.iter().enumerate().skip(rep.k_cut) {
        if !sc.state_bounds.admits(x, 1e-6) || x.s_dot < -1e-6 || !sc.on_road(x) || sc.collides(k, x) {
            return Err(format!("{}: inadmissible or colliding at {k}", sc.name));
        }
    }
    let phi = rule_formula(sc, &report.rules);
    let sig = monitor_signal(&phi.predicate_ids(), sc, t).map_err(|e| e.to_string())?;
    match oracle_tv(&phi, &sig, 0) {
        Tv::Inf => Ok(()),
        Tv::At(k) => Err(format!("{}: repaired trajectory violates at {k}", sc.name)),
    }
}

/// Some maneuver template, started anywhere, whose continuation passes
/// `splice_and_verify`.
pub fn known_witness(sc: &Scenario, phi: &Formula) -> Option<(ManeuverKind, usize)> {
    let base = &sc.ego_trajectory;
    for kind in ManeuverKind::ALL {
        for variant in 0..2 {
            for k in 0..base.horizon() {
                let t = splice_maneuver(sc, base, kind, variant, k);
                if splice_and_verify(sc, &t.inputs[k..], k, phi).is_ok() {
                    return Some((kind, k));
                }
            }
        }
    }
    None
}

/// Exhaustive maneuver-start scan for the valuation of a repair.
pub fn tc_oracle(sc: &Scenario, report: &RepairReport) -> Option<usize> {
    let rep = report.outcome.repaired()?;
    let tv = report.tv?;
    let lib = RuleLibrary::bundled(sc.dt);
    let selected = lib.select(&report.rules).ok()?;
    let ar = rulerepair::abstraction::abstract_rules(&selected).ok()?;
    let phi = conjoin_rules(&selected);
    let sig = monitor_signal(&phi.predicate_ids(), sc, &sc.ego_trajectory).ok()?;
    let trace = trace_valuation(&ar, &sig, tv);
    let (flipped, kinds) = select_maneuvers(&rep.valuation, &ar, &trace).ok()?;
    let req = requirement(&ar, &rep.valuation, &flipped);
    kinds
        .iter()
        .filter_map(|k| all_maneuver_starts(sc, *k, &req, tv).ok()?.into_iter().max())
        .max()
}

pub fn is_infeasible(o: &RepairOutcome) -> bool {
    matches!(o, RepairOutcome::Infeasible { .. })
}

/// Valid fuzzed scenarios for seeds `0..`, `n` of them.
pub fn fuzzed_suite(n: usize) -> Vec<Scenario> {
    (0u64..)
        .map(rulerepair::scenarios::fuzzed)
        .filter(|sc| rulerepair::world_model::validate_scenario(sc).is_empty())
        .take(n)
        .collect()
}
