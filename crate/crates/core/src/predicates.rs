//! Traffic-rule predicate catalog: evaluators, margins and set projections.
//!
//! Every evaluator returns `(truth, margin)` with `margin > 0 ⇔ truth`. Ego
//! occupancy is `[s - ℓ/2, s + ℓ/2] × [d - w/2, d + w/2]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reach::Cell;
use crate::stl::TableSignal;
use crate::world_model::{Obstacle, ObstaclePath, Scenario, Span, State, Trajectory};

/// Standstill velocity threshold (m/s).
pub const V_STILL: f64 = 0.01;
/// Braking capability assumed for ego and leader in the safe distance (m/s²).
pub const A_MIN_SAFE: f64 = -10.0;
/// Reaction time in the safe distance (s).
pub const T_REACT: f64 = 0.4;
/// Comfortable deceleration threshold for `causes_braking_intersection` (m/s²).
pub const A_COMF: f64 = 2.0;
/// Velocity slab width used to project the safe-distance region (m/s).
const SAFE_DISTANCE_SLAB: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arity {
    EgoOnly,
    EgoObstacle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    LongitudinalPosition,
    LateralPosition,
    Velocity,
    Acceleration,
    Uncategorized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PredicateDef {
    pub id: &'static str,
    pub arity: Arity,
    pub category: Category,
    pub projectable: bool,
    pub description: &'static str,
}

const fn def(id: &'static str, arity: Arity, category: Category, projectable: bool, description: &'static str) -> PredicateDef {
    PredicateDef { id, arity, category, projectable, description }
}

use Arity::*;
use Category::*;

pub const CATALOG: &[PredicateDef] = &[
    def("stop_line_in_front", EgoOnly, LongitudinalPosition, true, "front bumper before the next stop line: s_stop - (s + l/2)"),
    def("in_standstill", EgoOnly, Velocity, true, "v_still - |s_dot| with v_still = 0.01 m/s"),
    def("at_traffic_sign_stop", EgoOnly, Uncategorized, true, "scenario flag: stop sign governs the lane"),
    def("relevant_traffic_light", EgoOnly, Uncategorized, true, "scenario flag: a traffic light governs the lane"),
    def("has_priority_conflict", EgoOnly, Uncategorized, true, "scenario flag: the relevant obstacle has priority"),
    def("in_same_lane", EgoObstacle, LateralPosition, true, "obstacle centre in the lane and ego footprint overlapping it"),
    def("behind", EgoObstacle, LongitudinalPosition, true, "ego front behind obstacle rear: (s_o - l_o/2) - (s + l/2)"),
    def("cut_in", EgoObstacle, Uncategorized, false, "obstacle footprint entering the lane from outside, moving inward"),
    def("keeps_safe_distance_prec", EgoObstacle, LongitudinalPosition, true, "gap - (v^2/20 - v_o^2/20 + 0.4 v)"),
    def("keeps_lane_speed_limit", EgoOnly, Velocity, true, "road speed limit at s minus s_dot"),
    def("keeps_type_speed_limit", EgoOnly, Velocity, true, "configured vehicle-type limit minus s_dot"),
    def("keeps_fov_speed_limit", EgoOnly, Velocity, true, "configured field-of-view limit minus s_dot"),
    def("keeps_braking_speed_limit", EgoOnly, Velocity, true, "configured braking-distance limit minus s_dot"),
    def("in_intersection_conflict_area", EgoObstacle, LongitudinalPosition, true, "ego occupancy overlaps the conflict interval"),
    def("obs_in_intersection_conflict_area", EgoObstacle, Uncategorized, true, "obstacle occupancy overlaps its conflict interval"),
    def("on_lanelet_with_type_intersection", EgoOnly, LongitudinalPosition, true, "ego centre inside the intersection interval"),
    def("causes_braking_intersection", EgoObstacle, LongitudinalPosition, true, "ego in the conflict area while the obstacle needs > 2 m/s^2 to stop before it"),
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredicateError {
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("predicate `{0}` needs an obstacle")]
    MissingObstacle(String),
    #[error("no obstacle with id `{0}`")]
    UnknownObstacle(String),
}

pub fn lookup(id: &str) -> Result<&'static PredicateDef, PredicateError> {
    CATALOG.iter().find(|d| d.id == id).ok_or_else(|| PredicateError::UnknownPredicate(id.to_string()))
}

/// Truth and margin from `eval_predicate`.
pub type Verdict = (bool, f64);

fn verdict(margin: f64) -> Verdict {
    (margin > 0.0, margin)
}

fn flag(b: bool) -> Verdict {
    (b, if b { 1.0 } else { -1.0 })
}

/// Evaluate on the planned ego state at step `k`.
pub fn eval_predicate(id: &str, sc: &Scenario, k: usize, obstacle: Option<&str>) -> Result<Verdict, PredicateError> {
    let ego = sc.ego_trajectory.states.get(k).copied().unwrap_or_else(|| *sc.ego_trajectory.states.last().unwrap());
    eval_predicate_state(id, sc, k, &ego, obstacle)
}

/// Evaluate on an arbitrary ego state placed at step `k`.
pub fn eval_predicate_state(
    id: &str,
    sc: &Scenario,
    k: usize,
    ego: &State,
    obstacle: Option<&str>,
) -> Result<Verdict, PredicateError> {
    let d = lookup(id)?;
    let obs = resolve_obstacle(d, sc, obstacle)?;
    Ok(evaluate(d, sc, k, ego, obs))
}

fn resolve_obstacle<'a>(d: &PredicateDef, sc: &'a Scenario, obstacle: Option<&str>) -> Result<Option<&'a Obstacle>, PredicateError> {
    match (d.arity, obstacle) {
        (EgoOnly, _) => Ok(None),
        (EgoObstacle, None) => Err(PredicateError::MissingObstacle(d.id.to_string())),
        (EgoObstacle, Some(o)) => sc.obstacle(o).map(Some).ok_or_else(|| PredicateError::UnknownObstacle(o.to_string())),
    }
}

/// Geometry of one obstacle at one step.
struct ObsView {
    x: State,
    len: f64,
    width: f64,
    shares_road: bool,
}

impl ObsView {
    fn new(o: &Obstacle, k: usize, dt: f64) -> Self {
        ObsView {
            x: o.state_at(k, dt).0,
            len: o.length,
            width: o.width,
            shares_road: o.path == ObstaclePath::EgoRoad,
        }
    }

    fn rear(&self) -> f64 {
        self.x.s - self.len / 2.0
    }
}

fn stop_line_margin(sc: &Scenario, ego: &State) -> f64 {
    let half = sc.ego_length() / 2.0;
    let rear = ego.s - half;
    let mut lines = sc.road.stop_lines.clone();
    lines.sort_by(f64::total_cmp);
    match lines.into_iter().find(|l| *l >= rear) {
        Some(line) => line - (ego.s + half),
        None => -1.0,
    }
}

fn safe_distance(v: f64, v_o: f64) -> f64 {
    let b = 2.0 * A_MIN_SAFE.abs();
    v * v / b - v_o * v_o / b + v * T_REACT
}

fn conflict_margin(front: f64, rear: f64, entry: f64, exit: f64) -> f64 {
    (front - entry).min(exit - rear)
}

fn obstacle_conflict(sc: &Scenario, o: &Obstacle, ov: &ObsView) -> Option<(f64, f64, f64)> {
    let ca = sc.road.conflict_area(&o.id)?;
    let m = conflict_margin(ov.x.s + ov.len / 2.0, ov.rear(), ca.obs_entry, ca.obs_exit);
    Some((m, ca.obs_entry, ca.obs_exit))
}

/// Margin of "the obstacle must brake harder than a_comf to stay out".
fn obstacle_braking_margin(sc: &Scenario, o: &Obstacle, ov: &ObsView) -> f64 {
    let Some(ca) = sc.road.conflict_area(&o.id) else { return -1.0 };
    let gap = ca.obs_entry - (ov.x.s + ov.len / 2.0);
    if gap <= 0.0 {
        return gap.min(-1e-6);
    }
    let v = ov.x.s_dot.max(0.0);
    let required = v * v / (2.0 * gap);
    gap.min(required - A_COMF)
}

fn lane_margin_obstacle(sc: &Scenario, ov: &ObsView) -> f64 {
    let lane = sc.road.lane_at(ov.x.s);
    (ov.x.d - lane.lo).min(lane.hi - ov.x.d)
}

fn evaluate(d: &PredicateDef, sc: &Scenario, k: usize, ego: &State, obs: Option<&Obstacle>) -> Verdict {
    let half = sc.ego_length() / 2.0;
    let (front, rear) = (ego.s + half, ego.s - half);
    let ctx = &sc.road.context;
    let ov = obs.map(|o| ObsView::new(o, k, sc.dt));
    match d.id {
        "stop_line_in_front" => verdict(stop_line_margin(sc, ego)),
        "in_standstill" => verdict(V_STILL - ego.s_dot.abs()),
        "at_traffic_sign_stop" => flag(ctx.at_traffic_sign_stop.at(k)),
        "relevant_traffic_light" => flag(ctx.relevant_traffic_light.at(k)),
        "has_priority_conflict" => flag(ctx.has_priority_conflict.at(k)),
        "keeps_lane_speed_limit" => verdict(sc.road.speed_limit_at(ego.s) - ego.s_dot),
        "keeps_type_speed_limit" => verdict(ctx.type_speed_limit.unwrap_or(f64::INFINITY) - ego.s_dot),
        "keeps_fov_speed_limit" => verdict(ctx.fov_speed_limit.unwrap_or(f64::INFINITY) - ego.s_dot),
        "keeps_braking_speed_limit" => verdict(ctx.braking_speed_limit.unwrap_or(f64::INFINITY) - ego.s_dot),
        "on_lanelet_with_type_intersection" => match sc.road.intersection_interval {
            Some([a, b]) => verdict((ego.s - a).min(b - ego.s)),
            None => flag(false),
        },
        "behind" => {
            let ov = ov.unwrap();
            if !ov.shares_road {
                return flag(false);
            }
            verdict(ov.rear() - front)
        }
        "keeps_safe_distance_prec" => {
            let ov = ov.unwrap();
            if !ov.shares_road {
                return flag(true);
            }
            verdict(ov.rear() - front - safe_distance(ego.s_dot, ov.x.s_dot))
        }
        "in_same_lane" => {
            let ov = ov.unwrap();
            if !ov.shares_road {
                return flag(false);
            }
            let lane = sc.road.lane_at(ego.s);
            let w = sc.ego_width() / 2.0;
            let ego_overlap = (ego.d + w - lane.lo).min(lane.hi - (ego.d - w));
            verdict(ego_overlap.min(lane_margin_obstacle(sc, &ov)))
        }
        "cut_in" => {
            let ov = ov.unwrap();
            if !ov.shares_road {
                return flag(false);
            }
            let lane = sc.road.lane_at(ov.x.s);
            let w = ov.width / 2.0;
            let overlap = (ov.x.d + w - lane.lo).min(lane.hi - (ov.x.d - w));
            let outside = (lane.lo - ov.x.d).max(ov.x.d - lane.hi);
            let inward = if ov.x.d > lane.hi { -ov.x.d_dot } else { ov.x.d_dot };
            verdict(overlap.min(outside).min(inward))
        }
        "in_intersection_conflict_area" => match sc.road.conflict_area(&obs.unwrap().id) {
            Some(ca) => verdict(conflict_margin(front, rear, ca.s_entry, ca.s_exit)),
            None => flag(false),
        },
        "obs_in_intersection_conflict_area" => {
            let o = obs.unwrap();
            match obstacle_conflict(sc, o, ov.as_ref().unwrap()) {
                Some((m, _, _)) => verdict(m),
                None => flag(false),
            }
        }
        "causes_braking_intersection" => {
            let o = obs.unwrap();
            let Some(ca) = sc.road.conflict_area(&o.id) else { return flag(false) };
            let ego_in = conflict_margin(front, rear, ca.s_entry, ca.s_exit);
            verdict(ego_in.min(obstacle_braking_margin(sc, o, ov.as_ref().unwrap())))
        }
        other => unreachable!("catalogued predicate without evaluator: {other}"),
    }
}

/// Set image of a predicate literal at one step.
#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    /// Union of boxes; empty means no ego state qualifies.
    Region(Vec<Cell>),
    NotProjectable,
}

impl Projection {
    fn everything() -> Self {
        Projection::Region(vec![Cell::EVERYTHING])
    }

    fn nothing() -> Self {
        Projection::Region(Vec::new())
    }

    fn constant(b: bool) -> Self {
        if b {
            Projection::everything()
        } else {
            Projection::nothing()
        }
    }

    pub fn contains(&self, s: f64, sdot: f64, d: f64) -> bool {
        match self {
            Projection::Region(cells) => cells.iter().any(|c| c.contains(s, sdot, d)),
            Projection::NotProjectable => true,
        }
    }
}

fn interval_split(lo: f64, hi: f64, polarity: bool) -> Vec<Cell> {
    if polarity {
        vec![Cell::s_only(Span::new(lo, hi))]
    } else {
        vec![Cell::s_only(Span::new(f64::NEG_INFINITY, lo)), Cell::s_only(Span::new(hi, f64::INFINITY))]
    }
}

fn velocity_cap(lim: f64, polarity: bool) -> Projection {
    if !lim.is_finite() {
        return Projection::constant(polarity);
    }
    let v = if polarity { Span::new(f64::NEG_INFINITY, lim) } else { Span::new(lim, f64::INFINITY) };
    Projection::Region(vec![Cell::sdot_only(v)])
}

/// Sound outer approximation of `{ego states at k with predicate = polarity}`.
pub fn project_predicate(
    id: &str,
    sc: &Scenario,
    k: usize,
    polarity: bool,
    obstacle: Option<&str>,
) -> Result<Projection, PredicateError> {
    let d = lookup(id)?;
    let obs = resolve_obstacle(d, sc, obstacle)?;
    if !d.projectable {
        return Ok(Projection::NotProjectable);
    }
    let half = sc.ego_length() / 2.0;
    let ctx = &sc.road.context;
    let ov = obs.map(|o| ObsView::new(o, k, sc.dt));
    let p = match d.id {
        "stop_line_in_front" => {
            let mut lines = sc.road.stop_lines.clone();
            lines.sort_by(f64::total_cmp);
            if lines.is_empty() {
                return Ok(Projection::constant(!polarity));
            }
            let mut cells = Vec::new();
            if polarity {
                let mut prev = f64::NEG_INFINITY;
                for l in &lines {
                    cells.push(Cell::s_only(Span::new(prev + half, l - half)));
                    prev = *l;
                }
            } else {
                for l in &lines {
                    cells.push(Cell::s_only(Span::new(l - half, l + half)));
                }
                cells.push(Cell::s_only(Span::new(lines[lines.len() - 1] + half, f64::INFINITY)));
            }
            Projection::Region(cells)
        }
        "in_standstill" => {
            if polarity {
                Projection::Region(vec![Cell::sdot_only(Span::new(-V_STILL, V_STILL))])
            } else {
                Projection::Region(vec![
                    Cell::sdot_only(Span::new(f64::NEG_INFINITY, -V_STILL)),
                    Cell::sdot_only(Span::new(V_STILL, f64::INFINITY)),
                ])
            }
        }
        "at_traffic_sign_stop" => Projection::constant(ctx.at_traffic_sign_stop.at(k) == polarity),
        "relevant_traffic_light" => Projection::constant(ctx.relevant_traffic_light.at(k) == polarity),
        "has_priority_conflict" => Projection::constant(ctx.has_priority_conflict.at(k) == polarity),
        "keeps_lane_speed_limit" => {
            let mut cells = Vec::new();
            for (a, b, lim) in sc.road.speed_limit_segments() {
                let s = Span::new(a, b);
                if !lim.is_finite() {
                    if polarity {
                        cells.push(Cell::s_only(s));
                    }
                    continue;
                }
                let v = if polarity { Span::new(f64::NEG_INFINITY, lim) } else { Span::new(lim, f64::INFINITY) };
                cells.push(Cell { s, sdot: v, d: Span::all() });
            }
            Projection::Region(cells)
        }
        "keeps_type_speed_limit" => velocity_cap(ctx.type_speed_limit.unwrap_or(f64::INFINITY), polarity),
        "keeps_fov_speed_limit" => velocity_cap(ctx.fov_speed_limit.unwrap_or(f64::INFINITY), polarity),
        "keeps_braking_speed_limit" => velocity_cap(ctx.braking_speed_limit.unwrap_or(f64::INFINITY), polarity),
        "on_lanelet_with_type_intersection" => match sc.road.intersection_interval {
            Some([a, b]) => Projection::Region(interval_split(a, b, polarity)),
            None => Projection::constant(!polarity),
        },
        "behind" => {
            let ov = ov.unwrap();
            if !ov.shares_road {
                return Ok(Projection::constant(!polarity));
            }
            let lim = ov.rear() - half;
            let s = if polarity { Span::new(f64::NEG_INFINITY, lim) } else { Span::new(lim, f64::INFINITY) };
            Projection::Region(vec![Cell::s_only(s)])
        }
        "keeps_safe_distance_prec" => {
            let ov = ov.unwrap();
            if !ov.shares_road {
                return Ok(Projection::constant(polarity));
            }
            let c = ov.rear() - half + ov.x.s_dot * ov.x.s_dot / (2.0 * A_MIN_SAFE.abs());
            Projection::Region(safe_distance_slabs(sc, c, polarity))
        }
        "in_same_lane" => {
            let ov = ov.unwrap();
            if !ov.shares_road || lane_margin_obstacle(sc, &ov) <= 0.0 {
                return Ok(Projection::constant(!polarity));
            }
            let w = sc.ego_width() / 2.0;
            let (rmin, rmax) = (sc.road.lane_right.min(), sc.road.lane_right.max());
            let (lmin, lmax) = (sc.road.lane_left.min(), sc.road.lane_left.max());
            if polarity {
                Projection::Region(vec![Cell::d_only(Span::new(rmin - w, lmax + w))])
            } else {
                Projection::Region(vec![
                    Cell::d_only(Span::new(f64::NEG_INFINITY, rmax - w)),
                    Cell::d_only(Span::new(lmin + w, f64::INFINITY)),
                ])
            }
        }
        "in_intersection_conflict_area" => match sc.road.conflict_area(&obs.unwrap().id) {
            Some(ca) => Projection::Region(interval_split(ca.s_entry - half, ca.s_exit + half, polarity)),
            None => Projection::constant(!polarity),
        },
        "obs_in_intersection_conflict_area" => {
            let o = obs.unwrap();
            let inside = obstacle_conflict(sc, o, ov.as_ref().unwrap()).is_some_and(|(m, _, _)| m > 0.0);
            Projection::constant(inside == polarity)
        }
        "causes_braking_intersection" => {
            let o = obs.unwrap();
            let Some(ca) = sc.road.conflict_area(&o.id) else { return Ok(Projection::constant(!polarity)) };
            if obstacle_braking_margin(sc, o, ov.as_ref().unwrap()) > 0.0 {
                Projection::Region(interval_split(ca.s_entry - half, ca.s_exit + half, polarity))
            } else {
                Projection::constant(!polarity)
            }
        }
        other => unreachable!("catalogued predicate without projector: {other}"),
    };
    Ok(p)
}

/// `s < c - f(v)` with `f(v) = v²/20 + 0.4 v`, covered by velocity slabs.
fn safe_distance_slabs(sc: &Scenario, c: f64, polarity: bool) -> Vec<Cell> {
    let b = 2.0 * A_MIN_SAFE.abs();
    let f = |v: f64| v * v / b + T_REACT * v;
    let vmin_f = -T_REACT * b / 2.0;
    let (lo, hi) = (sc.state_bounds.s_dot.lo.max(-60.0), sc.state_bounds.s_dot.hi.min(80.0));
    let mut cells = Vec::new();
    let mut v = lo;
    while v < hi {
        let w = (v + SAFE_DISTANCE_SLAB).min(hi);
        let (fa, fb) = (f(v), f(w));
        let fmin = if vmin_f > v && vmin_f < w { f(vmin_f) } else { fa.min(fb) };
        let fmax = fa.max(fb);
        let s = if polarity { Span::new(f64::NEG_INFINITY, c - fmin) } else { Span::new(c - fmax, f64::INFINITY) };
        cells.push(Cell { s, sdot: Span::new(v, w), d: Span::all() });
        v = w;
    }
    // Tails outside the admissible velocity box.
    if polarity {
        let below_min = if vmin_f < lo { f(vmin_f) } else { f(lo) };
        cells.push(Cell { s: Span::new(f64::NEG_INFINITY, c - below_min), sdot: Span::new(f64::NEG_INFINITY, lo), d: Span::all() });
        cells.push(Cell { s: Span::new(f64::NEG_INFINITY, c - f(hi).min(f(vmin_f.max(hi)))), sdot: Span::new(hi, f64::INFINITY), d: Span::all() });
    } else {
        cells.push(Cell { s: Span::all(), sdot: Span::new(f64::NEG_INFINITY, lo), d: Span::all() });
        cells.push(Cell { s: Span::all(), sdot: Span::new(hi, f64::INFINITY), d: Span::all() });
    }
    cells
}

/// Value used for ego-obstacle predicates when the scenario has no obstacle.
fn vacuous(id: &str) -> bool {
    id == "keeps_safe_distance_prec"
}

/// Obstacle id bound to ego-obstacle predicates of this scenario.
pub fn rule_obstacle(sc: &Scenario) -> Option<&str> {
    sc.relevant_obstacle().map(|o| o.id.as_str())
}

/// Truth/margin column of one predicate along an ego trajectory.
pub fn predicate_column(id: &str, sc: &Scenario, traj: &Trajectory) -> Result<Vec<Verdict>, PredicateError> {
    let d = lookup(id)?;
    let obs = rule_obstacle(sc);
    traj.states
        .iter()
        .enumerate()
        .map(|(k, x)| {
            if d.arity == EgoObstacle && obs.is_none() {
                return Ok(flag(vacuous(id)));
            }
            eval_predicate_state(id, sc, k, x, obs)
        })
        .collect()
}

/// Monitoring signal over `traj` with characteristic robustness `±1`.
pub fn monitor_signal(ids: &[String], sc: &Scenario, traj: &Trajectory) -> Result<TableSignal, PredicateError> {
    let mut sig = TableSignal::new(traj.states.len());
    for id in ids {
        let col = predicate_column(id, sc, traj)?;
        sig.insert(id, col.into_iter().map(|(b, _)| (b, if b { 1.0 } else { -1.0 })).collect());
    }
    Ok(sig)
}

/// Monitoring signal carrying the predicate margins as robustness.
pub fn margin_signal(ids: &[String], sc: &Scenario, traj: &Trajectory) -> Result<TableSignal, PredicateError> {
    let mut sig = TableSignal::new(traj.states.len());
    for id in ids {
        sig.insert(id, predicate_column(id, sc, traj)?);
    }
    Ok(sig)
}

/// Truth of an ego-obstacle predicate for a given ego state, honouring the
/// "no obstacle" convention of [`predicate_column`].
pub fn truth_at(id: &str, sc: &Scenario, k: usize, ego: &State) -> Result<Verdict, PredicateError> {
    let d = lookup(id)?;
    let obs = rule_obstacle(sc);
    if d.arity == EgoObstacle && obs.is_none() {
        return Ok(flag(vacuous(id)));
    }
    eval_predicate_state(id, sc, k, ego, obs)
}

/// Projection honouring the same "no obstacle" convention.
pub fn project_at(id: &str, sc: &Scenario, k: usize, polarity: bool) -> Result<Projection, PredicateError> {
    let d = lookup(id)?;
    let obs = rule_obstacle(sc);
    if d.arity == EgoObstacle && obs.is_none() {
        return Ok(Projection::constant(vacuous(id) == polarity));
    }
    project_predicate(id, sc, k, polarity, obs)
}

/// Rules file shipped with the crate.
pub const DEFAULT_RULES: &str = include_str!("../../../rules/default.toml");

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("invalid rules file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("rule `{name}`: {source}")]
    Parse { name: String, source: crate::stl::ParseError },
    #[error("rule `{rule}` references unknown predicate `{pred}`")]
    UnknownPredicate { rule: String, pred: String },
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("duplicate rule `{0}`")]
    DuplicateRule(String),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct RuleSource {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub formula: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct RuleFile {
    #[serde(default)]
    pub version: u32,
    #[serde(default)]
    pub parameters: std::collections::BTreeMap<String, f64>,
    pub rules: Vec<RuleSource>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleLibraryEntry {
    pub name: String,
    pub description: String,
    pub source: String,
    pub formula: crate::stl::Formula,
}

/// Rules compiled for one step size.
#[derive(Debug, Clone)]
pub struct RuleLibrary {
    pub parameters: std::collections::BTreeMap<String, f64>,
    pub dt: f64,
    pub entries: Vec<RuleLibraryEntry>,
}

impl RuleLibrary {
    pub fn bundled(dt: f64) -> Self {
        Self::from_toml(DEFAULT_RULES, dt).expect("bundled rules compile")
    }

    pub fn from_toml(text: &str, dt: f64) -> Result<Self, RuleError> {
        let file: RuleFile = toml::from_str(text)?;
        Self::compile(&file, dt)
    }

    pub fn compile(file: &RuleFile, dt: f64) -> Result<Self, RuleError> {
        let mut ctx = crate::stl::ParseContext::with_dt(dt);
        ctx.params = file.parameters.clone();
        let mut entries: Vec<RuleLibraryEntry> = Vec::new();
        for r in &file.rules {
            if entries.iter().any(|e| e.name == r.name) {
                return Err(RuleError::DuplicateRule(r.name.clone()));
            }
            let formula = crate::stl::parse_with(&r.formula, &ctx)
                .map_err(|source| RuleError::Parse { name: r.name.clone(), source })?;
            for p in formula.predicate_ids() {
                if lookup(&p).is_err() {
                    return Err(RuleError::UnknownPredicate { rule: r.name.clone(), pred: p });
                }
            }
            entries.push(RuleLibraryEntry {
                name: r.name.clone(),
                description: r.description.clone(),
                source: r.formula.clone(),
                formula,
            });
        }
        Ok(RuleLibrary { parameters: file.parameters.clone(), dt, entries })
    }

    pub fn get(&self, name: &str) -> Result<&RuleLibraryEntry, RuleError> {
        self.entries.iter().find(|e| e.name == name).ok_or_else(|| RuleError::UnknownRule(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    /// `(name, formula)` pairs for the selected rules, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Vec<(String, crate::stl::Formula)>, RuleError> {
        names.iter().map(|n| self.get(n).map(|e| (e.name.clone(), e.formula.clone()))).collect()
    }
}
