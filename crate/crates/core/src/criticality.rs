//! Time-to-maneuver templates and the time-to-comply cut-off.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::abstraction::AbstractionResult;
use crate::predicates::{monitor_signal, Category, PredicateError};
use crate::sat::Valuation;
use crate::stl::{eval_bool, Formula, SignalView};
use crate::world_model::{step_dynamics, Input, Scenario, State, Trajectory};

/// Heading change of the steering variant (rad).
pub const TTS_HEADING: f64 = 0.2;
/// Feasibility tolerance on generated states.
const TOL: f64 = 1e-6;
/// Longest deadbeat stopping plan tried (steps).
const MAX_DEADBEAT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ManeuverKind {
    #[serde(rename = "TTB")]
    Brake,
    #[serde(rename = "TTK")]
    KickDown,
    #[serde(rename = "TTS_left")]
    SteerLeft,
    #[serde(rename = "TTS_right")]
    SteerRight,
    #[serde(rename = "TTMV")]
    HoldVelocity,
}

impl ManeuverKind {
    pub const ALL: [ManeuverKind; 5] =
        [ManeuverKind::Brake, ManeuverKind::KickDown, ManeuverKind::SteerLeft, ManeuverKind::SteerRight, ManeuverKind::HoldVelocity];

    pub fn label(&self) -> &'static str {
        match self {
            ManeuverKind::Brake => "TTB",
            ManeuverKind::KickDown => "TTK",
            ManeuverKind::SteerLeft => "TTS_left",
            ManeuverKind::SteerRight => "TTS_right",
            ManeuverKind::HoldVelocity => "TTMV",
        }
    }

    /// Maneuvers able to change predicates of a category.
    pub fn for_category(c: Category) -> &'static [ManeuverKind] {
        match c {
            Category::LongitudinalPosition | Category::Velocity => &[ManeuverKind::Brake, ManeuverKind::KickDown],
            Category::LateralPosition => &[ManeuverKind::SteerLeft, ManeuverKind::SteerRight],
            Category::Acceleration => &[ManeuverKind::HoldVelocity],
            Category::Uncategorized => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CriticalityError {
    #[error("no proposition of the valuation can be changed by a future maneuver")]
    NoActionableProposition,
    #[error(transparent)]
    Predicate(#[from] PredicateError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffResult {
    /// `None` encodes `−∞`.
    pub tc: Option<usize>,
    pub maneuver_set: Vec<ManeuverKind>,
    pub per_maneuver_ttm: BTreeMap<ManeuverKind, Option<usize>>,
    pub flipped_props: Vec<usize>,
    /// Smallest finite time-to-maneuver, reported alongside the max.
    pub min_ttm: Option<usize>,
    #[serde(skip)]
    pub witness: Option<Trajectory>,
}

/// Truth of every proposition on a trace at step `tv`.
pub fn trace_valuation(ar: &AbstractionResult, sig: &dyn SignalView, tv: usize) -> BTreeMap<usize, bool> {
    let k = tv.min(sig.horizon());
    ar.propositions.iter().map(|p| (p.index, eval_bool(&p.subformula, sig, k))).collect()
}

/// Propositions to flip and the maneuvers that may flip them.
pub fn select_maneuvers(
    valuation: &Valuation,
    ar: &AbstractionResult,
    trace: &BTreeMap<usize, bool>,
) -> Result<(Vec<usize>, BTreeSet<ManeuverKind>), CriticalityError> {
    let mut flipped = Vec::new();
    let mut kinds = BTreeSet::new();
    for (&j, &want) in &valuation.assignments {
        if ar.is_aux(j) || trace.get(&j) == Some(&want) {
            continue;
        }
        let p = ar.proposition(j);
        if p.contains_past_only {
            continue;
        }
        flipped.push(j);
        for c in &p.predicate_categories {
            kinds.extend(ManeuverKind::for_category(*c).iter().copied());
        }
    }
    if flipped.is_empty() {
        return Err(CriticalityError::NoActionableProposition);
    }
    Ok((flipped, kinds))
}

/// Conjunction of the flipped propositions' subformulas.
pub fn requirement(ar: &AbstractionResult, valuation: &Valuation, flipped: &[usize]) -> Formula {
    let parts: Vec<Formula> = flipped
        .iter()
        .map(|j| {
            let f = ar.proposition(*j).subformula.clone();
            if valuation.get(*j) == Some(false) {
                crate::stl::to_nnf(&Formula::not(f))
            } else {
                f
            }
        })
        .collect();
    if parts.len() == 1 {
        parts.into_iter().next().unwrap()
    } else {
        Formula::And(parts)
    }
}

/// Longitudinal chain `(v, a, j)` one step ahead under snap `u`.
fn chain_step(z: [f64; 3], u: f64, dt: f64) -> [f64; 3] {
    let [v, a, j] = z;
    [v + a * dt + j * dt * dt / 2.0 + u * dt * dt * dt / 6.0, a + j * dt + u * dt * dt / 2.0, j + u * dt]
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let mut a = [[0.0; 4]; 3];
    for i in 0..3 {
        a[i][..3].copy_from_slice(&m[i]);
        a[i][3] = b[i];
    }
    for c in 0..3 {
        let p = (c..3).max_by(|x, y| a[*x][c].abs().total_cmp(&a[*y][c].abs()))?;
        if a[p][c].abs() < 1e-14 {
            return None;
        }
        a.swap(c, p);
        for r in 0..3 {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..4 {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    Some([a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]])
}

/// Minimum-norm snap sequence of length `n` driving `(v, a, j)` to rest.
fn deadbeat(z: [f64; 3], n: usize, dt: f64) -> Option<Vec<f64>> {
    // Column i: effect of a unit snap at step i on the final chain state.
    let cols: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            let mut e = chain_step([0.0; 3], 1.0, dt);
            for _ in i + 1..n {
                e = chain_step(e, 0.0, dt);
            }
            e
        })
        .collect();
    let mut free = z;
    for _ in 0..n {
        free = chain_step(free, 0.0, dt);
    }
    let mut g = [[0.0; 3]; 3];
    for c in &cols {
        for r in 0..3 {
            for q in 0..3 {
                g[r][q] += c[r] * c[q];
            }
        }
    }
    let y = solve3(g, [-free[0], -free[1], -free[2]])?;
    Some(cols.iter().map(|c| c[0] * y[0] + c[1] * y[1] + c[2] * y[2]).collect())
}

fn long_ok(sc: &Scenario, z: [f64; 3], u: f64) -> bool {
    let xb = &sc.state_bounds;
    sc.input_bounds.u_long.contains_tol(u, TOL)
        && xb.s_dot.contains_tol(z[0], TOL)
        && xb.s_ddot.contains_tol(z[1], TOL)
        && xb.s_dddot.contains_tol(z[2], TOL)
}

/// Feasible deadbeat stopping plan from `x`, shortest first.
fn stopping_plan(sc: &Scenario, x: &State) -> Option<Vec<f64>> {
    let z0 = [x.s_dot, x.s_ddot, x.s_dddot];
    if z0.iter().all(|v| v.abs() < 1e-12) {
        return Some(Vec::new());
    }
    'n: for n in 3..=MAX_DEADBEAT {
        let Some(us) = deadbeat(z0, n, sc.dt) else { continue };
        let mut z = z0;
        for u in &us {
            z = chain_step(z, *u, sc.dt);
            if !long_ok(sc, z, *u) {
                continue 'n;
            }
        }
        return Some(us);
    }
    None
}

/// Snap that moves acceleration toward `target` within the jerk, snap and
/// acceleration boxes.
fn track_acceleration(sc: &Scenario, x: &State, target: f64) -> f64 {
    let dt = sc.dt;
    let xb = &sc.state_bounds;
    let ub = &sc.input_bounds.u_long;
    let (a, j) = (x.s_ddot, x.s_dddot);
    let gain = 1.0 / (2.0 * dt);
    let mut jt = xb.s_dddot.clamp(gain * (target - a));
    // Keep the next acceleration inside its box: a' = a + (j + j') dt / 2.
    let j_lo = 2.0 * (xb.s_ddot.lo - a) / dt - j;
    let j_hi = 2.0 * (xb.s_ddot.hi - a) / dt - j;
    jt = jt.max(j_lo).min(j_hi);
    ub.clamp((jt - j) / dt)
}

fn lateral_input(sc: &Scenario, x: &State, kind: ManeuverKind, variant: usize, d_target: f64) -> f64 {
    let dt = sc.dt;
    let sign = if kind == ManeuverKind::SteerLeft { 1.0 } else { -1.0 };
    let u = if variant == 0 {
        let w = 1.5;
        w * w * (d_target - x.d) - 2.0 * w * x.d_dot
    } else {
        let want = sign * TTS_HEADING.tan() * x.s_dot.max(0.0);
        3.0 * (want - x.d_dot)
    };
    let db = &sc.state_bounds.d_dot;
    let u = u.max((db.lo - x.d_dot) / dt).min((db.hi - x.d_dot) / dt);
    sc.input_bounds.u_lat.clamp(u)
}

/// Inputs of a maneuver template started at step `k` of `base`.
pub fn maneuver_inputs(sc: &Scenario, base: &Trajectory, kind: ManeuverKind, variant: usize, k: usize) -> Vec<Input> {
    let h = base.horizon();
    let mut x = base.states[k];
    let lane = sc.road.lane_at(x.s);
    let width = lane.width();
    let d_target = match kind {
        ManeuverKind::SteerLeft => x.d + width,
        ManeuverKind::SteerRight => x.d - width,
        _ => x.d,
    };
    let mut plan: Vec<f64> = Vec::new();
    let mut stopped = false;
    let mut out = Vec::with_capacity(h - k);
    for i in k..h {
        let nominal = base.inputs[i];
        let u_long = match kind {
            ManeuverKind::Brake => {
                if stopped {
                    0.0
                } else if let Some(u) = (!plan.is_empty()).then(|| plan.remove(0)) {
                    if plan.is_empty() {
                        stopped = true;
                    }
                    u
                } else if let Some(mut p) = stopping_plan(sc, &x) {
                    if p.is_empty() {
                        stopped = true;
                        0.0
                    } else {
                        let u = p.remove(0);
                        stopped = p.is_empty();
                        plan = p;
                        u
                    }
                } else {
                    track_acceleration(sc, &x, sc.state_bounds.s_ddot.lo)
                }
            }
            ManeuverKind::KickDown => {
                let a_hi = sc.state_bounds.s_ddot.hi;
                let v_hi = sc.state_bounds.s_dot.hi;
                // Stop accelerating when the remaining ramp-down would overshoot.
                let ramp = x.s_ddot.max(0.0) * x.s_ddot.max(0.0) / (2.0 * sc.state_bounds.s_dddot.hi.max(1e-6));
                let target = if x.s_dot + ramp + x.s_ddot.max(0.0) * sc.dt >= v_hi { 0.0 } else { a_hi };
                track_acceleration(sc, &x, target)
            }
            ManeuverKind::HoldVelocity => track_acceleration(sc, &x, 0.0),
            ManeuverKind::SteerLeft | ManeuverKind::SteerRight => nominal.u_long,
        };
        let u_lat = match kind {
            ManeuverKind::SteerLeft | ManeuverKind::SteerRight => lateral_input(sc, &x, kind, variant, d_target),
            _ => nominal.u_lat,
        };
        let u = Input { u_long, u_lat };
        x = step_dynamics(&x, &u, sc.dt);
        out.push(u);
    }
    out
}

/// `base` up to `k`, then the maneuver.
pub fn splice_maneuver(sc: &Scenario, base: &Trajectory, kind: ManeuverKind, variant: usize, k: usize) -> Trajectory {
    let mut inputs: Vec<Input> = base.inputs[..k].to_vec();
    inputs.extend(maneuver_inputs(sc, base, kind, variant, k));
    Trajectory::rollout_from(&base.states[..=k], &inputs, sc.dt)
}

/// Admissible, collision-free and satisfying `req` at step 0.
pub fn complies(sc: &Scenario, traj: &Trajectory, req: &Formula, from: usize) -> Result<bool, PredicateError> {
    for (k, x) in traj.states.iter().enumerate().skip(from) {
        if !sc.state_bounds.admits(x, TOL) || (sc.forward_only && x.s_dot < -TOL) || !sc.on_road(x) || sc.collides(k, x) {
            return Ok(false);
        }
    }
    if traj.inputs.iter().skip(from).any(|u| !sc.input_bounds.admits(u, TOL)) {
        return Ok(false);
    }
    let sig = monitor_signal(&req.predicate_ids(), sc, traj)?;
    Ok(eval_bool(req, &sig, 0))
}

fn variants(kind: ManeuverKind) -> usize {
    match kind {
        ManeuverKind::SteerLeft | ManeuverKind::SteerRight => 2,
        _ => 1,
    }
}

/// Latest start `k ≤ tv` from which the maneuver meets `req`, with its trajectory.
pub fn time_to_maneuver(
    sc: &Scenario,
    kind: ManeuverKind,
    req: &Formula,
    tv: usize,
) -> Result<Option<(usize, Trajectory)>, PredicateError> {
    let base = &sc.ego_trajectory;
    let top = tv.min(base.horizon());
    if complies(sc, base, req, 0)? {
        return Ok(Some((top, base.clone())));
    }
    for k in (0..=top).rev() {
        for v in 0..variants(kind) {
            let t = splice_maneuver(sc, base, kind, v, k);
            if complies(sc, &t, req, k)? {
                return Ok(Some((k, t)));
            }
        }
    }
    Ok(None)
}

/// Every start step satisfying `req`, without early exit (test oracle).
pub fn all_maneuver_starts(sc: &Scenario, kind: ManeuverKind, req: &Formula, tv: usize) -> Result<Vec<usize>, PredicateError> {
    let base = &sc.ego_trajectory;
    let mut out = Vec::new();
    for k in 0..=tv.min(base.horizon()) {
        for v in 0..variants(kind) {
            if complies(sc, &splice_maneuver(sc, base, kind, v, k), req, k)? {
                out.push(k);
                break;
            }
        }
    }
    Ok(out)
}

/// Time-to-comply: maximum time-to-maneuver over the selected maneuvers.
pub fn time_to_comply(
    sc: &Scenario,
    valuation: &Valuation,
    ar: &AbstractionResult,
    trace: &BTreeMap<usize, bool>,
    tv: usize,
) -> Result<CutoffResult, CriticalityError> {
    let (flipped, kinds) = select_maneuvers(valuation, ar, trace)?;
    let req = requirement(ar, valuation, &flipped);
    let mut per = BTreeMap::new();
    let mut best: Option<(usize, Trajectory)> = None;
    for kind in &kinds {
        let r = time_to_maneuver(sc, *kind, &req, tv)?;
        per.insert(*kind, r.as_ref().map(|(k, _)| *k));
        if let Some((k, t)) = r {
            if best.as_ref().map_or(true, |(b, _)| k > *b) {
                best = Some((k, t));
            }
        }
    }
    let min_ttm = per.values().flatten().min().copied();
    Ok(CutoffResult {
        tc: best.as_ref().map(|(k, _)| *k),
        maneuver_set: kinds.into_iter().collect(),
        per_maneuver_ttm: per,
        flipped_props: flipped,
        min_ttm,
        witness: best.map(|(_, t)| t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deadbeat_reaches_rest() {
        let dt = 0.2;
        let us = deadbeat([2.0, -3.0, 1.0], 6, dt).unwrap();
        let mut z = [2.0, -3.0, 1.0];
        for u in us {
            z = chain_step(z, u, dt);
        }
        assert!(z.iter().all(|v| v.abs() < 1e-9), "{z:?}");
    }
}
