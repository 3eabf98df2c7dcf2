//! Scenario representation, vehicle kinematics and curvilinear transforms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Closed real interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub lo: f64,
    pub hi: f64,
}

impl Span {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Span { lo, hi }
    }

    pub const fn all() -> Self {
        Span { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    pub fn point(x: f64) -> Self {
        Span { lo: x, hi: x }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_tol(&self, x: f64, tol: f64) -> bool {
        self.lo - tol <= x && x <= self.hi + tol
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn intersect(&self, o: &Span) -> Span {
        Span { lo: self.lo.max(o.lo), hi: self.hi.min(o.hi) }
    }

    pub fn hull(&self, o: &Span) -> Span {
        Span { lo: self.lo.min(o.lo), hi: self.hi.max(o.hi) }
    }

    pub fn is_subset_of(&self, o: &Span) -> bool {
        o.lo <= self.lo && self.hi <= o.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.max(self.lo).min(self.hi)
    }
}

impl From<[f64; 2]> for Span {
    fn from(v: [f64; 2]) -> Self {
        Span::new(v[0], v[1])
    }
}

/// Ego or obstacle state in curvilinear coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub s: f64,
    pub s_dot: f64,
    pub s_ddot: f64,
    pub s_dddot: f64,
    pub d: f64,
    pub d_dot: f64,
    pub theta: f64,
    pub t_index: usize,
}

impl State {
    pub fn at_rest(s: f64, d: f64) -> Self {
        State { s, d, ..Default::default() }
    }

    pub fn cruising(s: f64, v: f64, d: f64) -> Self {
        State { s, s_dot: v, d, ..Default::default() }
    }
}

/// Per-step control: longitudinal snap command and lateral acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Input {
    pub u_long: f64,
    pub u_lat: f64,
}

impl Input {
    pub const ZERO: Input = Input { u_long: 0.0, u_lat: 0.0 };
}

/// Exact zero-order-hold step of the longitudinal 4th-order chain and the
/// lateral double integrator.
pub fn step_dynamics(x: &State, u: &Input, dt: f64) -> State {
    let (dt2, dt3, dt4) = (dt * dt, dt * dt * dt, dt * dt * dt * dt);
    let ul = u.u_long;
    let s = x.s + x.s_dot * dt + x.s_ddot * dt2 / 2.0 + x.s_dddot * dt3 / 6.0 + ul * dt4 / 24.0;
    let s_dot = x.s_dot + x.s_ddot * dt + x.s_dddot * dt2 / 2.0 + ul * dt3 / 6.0;
    let s_ddot = x.s_ddot + x.s_dddot * dt + ul * dt2 / 2.0;
    let s_dddot = x.s_dddot + ul * dt;
    let d = x.d + x.d_dot * dt + u.u_lat * dt2 / 2.0;
    let d_dot = x.d_dot + u.u_lat * dt;
    State {
        s,
        s_dot,
        s_ddot,
        s_dddot,
        d,
        d_dot,
        theta: d_dot.atan2(s_dot),
        t_index: x.t_index + 1,
    }
}

/// Discrete trajectory: `states.len() == inputs.len() + 1`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub inputs: Vec<Input>,
}

impl Trajectory {
    /// Roll out `inputs` from `x0`.
    pub fn rollout(x0: State, inputs: &[Input], dt: f64) -> Self {
        let mut states = Vec::with_capacity(inputs.len() + 1);
        states.push(x0);
        for u in inputs {
            let next = step_dynamics(states.last().unwrap(), u, dt);
            states.push(next);
        }
        Trajectory { states, inputs: inputs.to_vec() }
    }

    /// Keep `prefix` bit-identical and roll out the remaining inputs from its
    /// last state.
    pub fn rollout_from(prefix: &[State], inputs: &[Input], dt: f64) -> Self {
        let mut states = prefix.to_vec();
        for u in &inputs[prefix.len() - 1..] {
            let next = step_dynamics(states.last().unwrap(), u, dt);
            states.push(next);
        }
        Trajectory { states, inputs: inputs.to_vec() }
    }

    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    /// Largest absolute deviation between recorded successors and `step_dynamics`.
    pub fn dynamics_residual(&self, dt: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, u) in self.inputs.iter().enumerate() {
            let (Some(a), Some(b)) = (self.states.get(k), self.states.get(k + 1)) else {
                return f64::INFINITY;
            };
            let p = step_dynamics(a, u, dt);
            if p.t_index != b.t_index {
                return f64::INFINITY;
            }
            for (x, y) in [
                (p.s, b.s),
                (p.s_dot, b.s_dot),
                (p.s_ddot, b.s_ddot),
                (p.s_dddot, b.s_dddot),
                (p.d, b.d),
                (p.d_dot, b.d_dot),
                (p.theta, b.theta),
            ] {
                let scale = 1.0f64.max(x.abs());
                worst = worst.max((x - y).abs() / scale);
            }
        }
        worst
    }

    /// `true` iff lengths agree and every step matches `step_dynamics` within `tol`.
    pub fn is_consistent(&self, dt: f64, tol: f64) -> bool {
        self.states.len() == self.inputs.len() + 1 && self.dynamics_residual(dt) <= tol
    }
}

/// Piecewise-linear profile over arc length; constant beyond its end points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Profile {
    Constant(f64),
    Points(Vec<[f64; 2]>),
}

impl Profile {
    pub fn at(&self, s: f64) -> f64 {
        match self {
            Profile::Constant(c) => *c,
            Profile::Points(pts) => {
                if pts.is_empty() {
                    return 0.0;
                }
                if s <= pts[0][0] {
                    return pts[0][1];
                }
                for w in pts.windows(2) {
                    let ([s0, v0], [s1, v1]) = (w[0], w[1]);
                    if s <= s1 {
                        if s1 - s0 <= 0.0 {
                            return v1;
                        }
                        return v0 + (v1 - v0) * (s - s0) / (s1 - s0);
                    }
                }
                pts[pts.len() - 1][1]
            }
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            Profile::Constant(c) => *c,
            Profile::Points(p) => p.iter().map(|x| x[1]).fold(f64::INFINITY, f64::min),
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            Profile::Constant(c) => *c,
            Profile::Points(p) => p.iter().map(|x| x[1]).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    fn knots(&self) -> Vec<f64> {
        match self {
            Profile::Constant(_) => Vec::new(),
            Profile::Points(p) => p.iter().map(|x| x[0]).collect(),
        }
    }
}

/// Scenario-supplied Boolean context: constant or one value per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Flag {
    Constant(bool),
    PerStep(Vec<bool>),
}

impl Default for Flag {
    fn default() -> Self {
        Flag::Constant(false)
    }
}

impl Flag {
    pub fn at(&self, k: usize) -> bool {
        match self {
            Flag::Constant(b) => *b,
            Flag::PerStep(v) => v.get(k).or(v.last()).copied().unwrap_or(false),
        }
    }
}

/// Crossing of the ego path with one obstacle's path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictArea {
    pub obstacle: String,
    /// Ego-path interval.
    pub s_entry: f64,
    pub s_exit: f64,
    /// Interval on the obstacle's own path.
    pub obs_entry: f64,
    pub obs_exit: f64,
}

/// Regulatory context not derivable from geometry.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RoadContext {
    pub at_traffic_sign_stop: Flag,
    pub relevant_traffic_light: Flag,
    pub has_priority_conflict: Flag,
    pub type_speed_limit: Option<f64>,
    pub fov_speed_limit: Option<f64>,
    pub braking_speed_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadModel {
    pub reference_path: Vec<[f64; 2]>,
    pub lane_left: Profile,
    pub lane_right: Profile,
    pub road_left: Profile,
    pub road_right: Profile,
    #[serde(default)]
    pub stop_lines: Vec<f64>,
    /// Piecewise-constant limit as `[s_start, v_limit]` pairs.
    pub speed_limit: Vec<[f64; 2]>,
    #[serde(default)]
    pub conflict_areas: Vec<ConflictArea>,
    #[serde(default)]
    pub intersection_interval: Option<[f64; 2]>,
    #[serde(default)]
    pub context: RoadContext,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("ambiguous projection: equidistant feet at s = {0} and s = {1}")]
    AmbiguousProjection(f64, f64),
    #[error("reference path needs at least two distinct points")]
    DegeneratePath,
}

impl RoadModel {
    /// Cumulative arc length at each polyline vertex.
    pub fn arc_lengths(&self) -> Vec<f64> {
        let mut acc = Vec::with_capacity(self.reference_path.len());
        let mut total = 0.0;
        for (i, p) in self.reference_path.iter().enumerate() {
            if i > 0 {
                let q = self.reference_path[i - 1];
                total += ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            }
            acc.push(total);
        }
        acc
    }

    pub fn path_length(&self) -> f64 {
        self.arc_lengths().last().copied().unwrap_or(0.0)
    }

    /// Speed limit at arc length `s`; unlimited before the first entry.
    pub fn speed_limit_at(&self, s: f64) -> f64 {
        let mut lim = f64::INFINITY;
        for [s0, v] in &self.speed_limit {
            if s >= *s0 {
                lim = *v;
            }
        }
        lim
    }

    /// `(s_start, s_end, v_limit)` segments covering the real line.
    pub fn speed_limit_segments(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        let mut entries = self.speed_limit.clone();
        entries.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let mut start = f64::NEG_INFINITY;
        let mut lim = f64::INFINITY;
        for [s0, v] in entries {
            if s0 > start {
                out.push((start, s0, lim));
            }
            start = s0;
            lim = v;
        }
        out.push((start, f64::INFINITY, lim));
        out
    }

    pub fn conflict_area(&self, obstacle: &str) -> Option<&ConflictArea> {
        self.conflict_areas.iter().find(|c| c.obstacle == obstacle)
    }

    /// Lane interval `[right, left]` at `s`.
    pub fn lane_at(&self, s: f64) -> Span {
        Span::new(self.lane_right.at(s), self.lane_left.at(s))
    }

    pub fn road_at(&self, s: f64) -> Span {
        Span::new(self.road_right.at(s), self.road_left.at(s))
    }

    fn segment_frames(&self) -> Vec<([f64; 2], [f64; 2], f64, f64)> {
        let acc = self.arc_lengths();
        let mut out = Vec::new();
        for i in 1..self.reference_path.len() {
            let a = self.reference_path[i - 1];
            let b = self.reference_path[i];
            let len = acc[i] - acc[i - 1];
            if len <= 0.0 {
                continue;
            }
            let dir = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
            out.push((a, dir, acc[i - 1], len));
        }
        out
    }
}

/// Project a Cartesian point onto the reference path.
pub fn cartesian_to_curvilinear(point: [f64; 2], road: &RoadModel) -> Result<(f64, f64), GeometryError> {
    let frames = road.segment_frames();
    if frames.is_empty() {
        return Err(GeometryError::DegeneratePath);
    }
    // (distance, s, signed d)
    let mut best: Option<(f64, f64, f64)> = None;
    let mut tie: Option<f64> = None;
    for (a, dir, s0, len) in frames {
        let rel = [point[0] - a[0], point[1] - a[1]];
        let t = (rel[0] * dir[0] + rel[1] * dir[1]).clamp(0.0, len);
        let foot = [a[0] + dir[0] * t, a[1] + dir[1] * t];
        let off = [point[0] - foot[0], point[1] - foot[1]];
        let dist = (off[0] * off[0] + off[1] * off[1]).sqrt();
        let cross = dir[0] * off[1] - dir[1] * off[0];
        let signed = if cross < 0.0 { -dist } else { dist };
        let s = s0 + t;
        match best {
            None => best = Some((dist, s, signed)),
            Some((bd, bs, _)) => {
                if dist < bd - 1e-9 {
                    best = Some((dist, s, signed));
                    tie = None;
                } else if (dist - bd).abs() <= 1e-9 && (s - bs).abs() > 1e-9 {
                    tie = Some(s);
                }
            }
        }
    }
    let (_, s, d) = best.unwrap();
    if let Some(other) = tie {
        return Err(GeometryError::AmbiguousProjection(s, other));
    }
    Ok((s, d))
}

/// Map `(s, d)` back to Cartesian coordinates using the left normal of the
/// segment containing `s` (ties toward the earlier segment).
pub fn curvilinear_to_cartesian(s: f64, d: f64, road: &RoadModel) -> Result<[f64; 2], GeometryError> {
    let frames = road.segment_frames();
    if frames.is_empty() {
        return Err(GeometryError::DegeneratePath);
    }
    let mut chosen = frames[frames.len() - 1];
    for f in &frames {
        if s <= f.2 + f.3 {
            chosen = *f;
            break;
        }
    }
    let (a, dir, s0, _) = chosen;
    let t = s - s0;
    let normal = [-dir[1], dir[0]];
    Ok([a[0] + dir[0] * t + normal[0] * d, a[1] + dir[1] * t + normal[1] * d])
}

/// How an obstacle's recorded `s` relates to the ego reference path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstaclePath {
    /// Shares the ego reference path and curvilinear frame.
    #[default]
    EgoRoad,
    /// Travels its own path; only its conflict interval relates it to the ego.
    Crossing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub id: String,
    pub trajectory: Trajectory,
    pub length: f64,
    pub width: f64,
    #[serde(default)]
    pub path: ObstaclePath,
}

impl Obstacle {
    /// Recorded state at `k`, extrapolated at constant velocity past the
    /// recording. The flag reports whether extrapolation was needed.
    pub fn state_at(&self, k: usize, dt: f64) -> (State, bool) {
        let states = &self.trajectory.states;
        if let Some(x) = states.get(k) {
            return (*x, false);
        }
        let last = states.last().copied().unwrap_or_default();
        let n = (k - last.t_index.min(k)) as f64 * dt;
        let x = State {
            s: last.s + last.s_dot * n,
            s_ddot: 0.0,
            s_dddot: 0.0,
            d: last.d + last.d_dot * n,
            t_index: k,
            ..last
        };
        (x, true)
    }
}

/// Admissible state box `X_k` (constant over the horizon).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateBounds {
    pub s_dot: Span,
    pub s_ddot: Span,
    pub s_dddot: Span,
    pub d_dot: Span,
}

/// Admissible input box `U_k` (constant over the horizon).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputBounds {
    pub u_long: Span,
    pub u_lat: Span,
}

impl Default for StateBounds {
    fn default() -> Self {
        StateBounds {
            s_dot: Span::new(0.0, 45.0),
            s_ddot: Span::new(-8.0, 3.0),
            s_dddot: Span::new(-15.0, 15.0),
            d_dot: Span::new(-3.0, 3.0),
        }
    }
}

impl Default for InputBounds {
    fn default() -> Self {
        InputBounds { u_long: Span::new(-100.0, 100.0), u_lat: Span::new(-4.0, 4.0) }
    }
}

impl StateBounds {
    pub fn admits(&self, x: &State, tol: f64) -> bool {
        self.s_dot.contains_tol(x.s_dot, tol)
            && self.s_ddot.contains_tol(x.s_ddot, tol)
            && self.s_dddot.contains_tol(x.s_dddot, tol)
            && self.d_dot.contains_tol(x.d_dot, tol)
    }
}

impl InputBounds {
    pub fn admits(&self, u: &Input, tol: f64) -> bool {
        self.u_long.contains_tol(u.u_long, tol) && self.u_lat.contains_tol(u.u_lat, tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub road: RoadModel,
    pub ego_initial: State,
    pub ego_trajectory: Trajectory,
    pub obstacles: Vec<Obstacle>,
    /// `(length, width)` of the ego vehicle.
    pub ego_dims: (f64, f64),
    pub dt: f64,
    pub horizon: usize,
    pub state_bounds: StateBounds,
    pub input_bounds: InputBounds,
    pub forward_only: bool,
    /// Obstacle bound to ego-obstacle predicates; defaults to the first one.
    pub relevant_obstacle: Option<String>,
    /// Rules named by the scenario file, used when a caller passes none.
    pub rules: Vec<String>,
}

impl Scenario {
    pub fn ego_length(&self) -> f64 {
        self.ego_dims.0
    }

    pub fn ego_width(&self) -> f64 {
        self.ego_dims.1
    }

    pub fn obstacle(&self, id: &str) -> Option<&Obstacle> {
        self.obstacles.iter().find(|o| o.id == id)
    }

    pub fn relevant_obstacle(&self) -> Option<&Obstacle> {
        match &self.relevant_obstacle {
            Some(id) => self.obstacle(id),
            None => self.obstacles.first(),
        }
    }

    /// Obstacle occupancies at step `k` in the ego frame as `(s, d)` boxes.
    /// A crossing obstacle occupies the ego side of its conflict area while
    /// its own footprint overlaps its conflict interval.
    pub fn obstacle_boxes(&self, k: usize) -> Vec<(Span, Span)> {
        let mut out = Vec::new();
        for o in &self.obstacles {
            let (x, _) = o.state_at(k, self.dt);
            match o.path {
                ObstaclePath::EgoRoad => out.push((
                    Span::new(x.s - o.length / 2.0, x.s + o.length / 2.0),
                    Span::new(x.d - o.width / 2.0, x.d + o.width / 2.0),
                )),
                ObstaclePath::Crossing => {
                    if let Some(ca) = self.road.conflict_area(&o.id) {
                        let inside = x.s + o.length / 2.0 > ca.obs_entry && x.s - o.length / 2.0 < ca.obs_exit;
                        if inside {
                            out.push((Span::new(ca.s_entry, ca.s_exit), Span::all()));
                        }
                    }
                }
            }
        }
        out
    }

    /// Ego centre inside the road boundaries.
    pub fn on_road(&self, x: &State) -> bool {
        self.road.road_at(x.s).contains_tol(x.d, 1e-9)
    }

    /// Whether the ego footprint at `x` overlaps an obstacle at step `k`.
    pub fn collides(&self, k: usize, x: &State) -> bool {
        let (hl, hw) = (self.ego_length() / 2.0, self.ego_width() / 2.0);
        self.obstacle_boxes(k)
            .iter()
            .any(|(s, d)| x.s + hl > s.lo && x.s - hl < s.hi && x.d + hw > d.lo && x.d - hw < d.hi)
    }

    /// Copy with a different planned ego trajectory.
    pub fn with_ego_trajectory(&self, traj: Trajectory) -> Scenario {
        let mut sc = self.clone();
        sc.ego_initial = traj.states[0];
        sc.ego_trajectory = traj;
        sc
    }

    pub fn from_json(text: &str) -> Result<Scenario, serde_json::Error> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        Ok(file.into())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ScenarioFile::from(self)).expect("scenario serializes")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EgoSection {
    length: f64,
    width: f64,
    initial: State,
    trajectory: Trajectory,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BoundsSection {
    #[serde(default)]
    state: StateBounds,
    #[serde(default)]
    input: InputBounds,
    #[serde(default = "yes")]
    forward_only: bool,
}

fn yes() -> bool {
    true
}

/// On-disk layout of a scenario file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScenarioFile {
    #[serde(default)]
    name: String,
    road: RoadModel,
    ego: EgoSection,
    #[serde(default)]
    obstacles: Vec<Obstacle>,
    dt: f64,
    horizon: usize,
    bounds: BoundsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    relevant_obstacle: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    rules: Vec<String>,
}

impl From<ScenarioFile> for Scenario {
    fn from(f: ScenarioFile) -> Self {
        Scenario {
            name: f.name,
            road: f.road,
            ego_initial: f.ego.initial,
            ego_trajectory: f.ego.trajectory,
            obstacles: f.obstacles,
            ego_dims: (f.ego.length, f.ego.width),
            dt: f.dt,
            horizon: f.horizon,
            state_bounds: f.bounds.state,
            input_bounds: f.bounds.input,
            forward_only: f.bounds.forward_only,
            relevant_obstacle: f.relevant_obstacle,
            rules: f.rules,
        }
    }
}

impl From<&Scenario> for ScenarioFile {
    fn from(sc: &Scenario) -> Self {
        ScenarioFile {
            name: sc.name.clone(),
            road: sc.road.clone(),
            ego: EgoSection {
                length: sc.ego_dims.0,
                width: sc.ego_dims.1,
                initial: sc.ego_initial,
                trajectory: sc.ego_trajectory.clone(),
            },
            obstacles: sc.obstacles.clone(),
            dt: sc.dt,
            horizon: sc.horizon,
            bounds: BoundsSection {
                state: sc.state_bounds,
                input: sc.input_bounds,
                forward_only: sc.forward_only,
            },
            relevant_obstacle: sc.relevant_obstacle.clone(),
            rules: sc.rules.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    NonPositiveDt,
    DegeneratePath,
    LengthMismatch,
    HorizonMismatch,
    DynamicsMismatch,
    TimeIndexMismatch,
    InitialStateMismatch,
    LaneBoundsInverted,
    RoadBoundsInverted,
    StopLineOutOfDomain,
    ConflictAreaOutOfDomain,
    IntersectionOutOfDomain,
    UnknownObstacle,
    InvalidDimensions,
    InvalidBounds,
    ReverseMotion,
    NonFiniteState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub detail: String,
}

fn push(out: &mut Vec<Violation>, code: ViolationCode, detail: impl Into<String>) {
    out.push(Violation { code, detail: detail.into() });
}

const DYN_TOL: f64 = 1e-9;

fn check_trajectory(out: &mut Vec<Violation>, who: &str, traj: &Trajectory, sc: &Scenario) {
    if traj.states.len() != traj.inputs.len() + 1 {
        push(
            out,
            ViolationCode::LengthMismatch,
            format!("{who}: {} states vs {} inputs", traj.states.len(), traj.inputs.len()),
        );
        return;
    }
    if traj.horizon() != sc.horizon {
        push(out, ViolationCode::HorizonMismatch, format!("{who}: horizon {} != {}", traj.horizon(), sc.horizon));
    }
    for (k, x) in traj.states.iter().enumerate() {
        if x.t_index != k {
            push(out, ViolationCode::TimeIndexMismatch, format!("{who}: state {k} has t_index {}", x.t_index));
            return;
        }
        if ![x.s, x.s_dot, x.s_ddot, x.s_dddot, x.d, x.d_dot, x.theta].iter().all(|v| v.is_finite()) {
            push(out, ViolationCode::NonFiniteState, format!("{who}: state {k}"));
            return;
        }
    }
    let r = traj.dynamics_residual(sc.dt);
    if r > DYN_TOL {
        push(out, ViolationCode::DynamicsMismatch, format!("{who}: residual {r:.3e}"));
    }
}

/// One entry per violated scenario invariant.
pub fn validate_scenario(sc: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(sc.dt > 0.0 && sc.dt.is_finite()) {
        push(&mut out, ViolationCode::NonPositiveDt, format!("dt = {}", sc.dt));
        return out;
    }
    let len = sc.road.path_length();
    if sc.road.reference_path.len() < 2 || len <= 0.0 {
        push(&mut out, ViolationCode::DegeneratePath, "reference path");
    }
    let mut probes: Vec<f64> = vec![0.0, len];
    for p in [&sc.road.lane_left, &sc.road.lane_right, &sc.road.road_left, &sc.road.road_right] {
        probes.extend(p.knots());
    }
    for s in &probes {
        if sc.road.lane_right.at(*s) >= sc.road.lane_left.at(*s) {
            push(&mut out, ViolationCode::LaneBoundsInverted, format!("at s = {s}"));
            break;
        }
    }
    for s in &probes {
        if sc.road.road_right.at(*s) >= sc.road.road_left.at(*s) {
            push(&mut out, ViolationCode::RoadBoundsInverted, format!("at s = {s}"));
            break;
        }
    }
    let dom = Span::new(0.0, len);
    for s in &sc.road.stop_lines {
        if !dom.contains(*s) {
            push(&mut out, ViolationCode::StopLineOutOfDomain, format!("stop line at {s} outside [0, {len}]"));
        }
    }
    for c in &sc.road.conflict_areas {
        if !(dom.contains(c.s_entry) && dom.contains(c.s_exit) && c.s_entry <= c.s_exit && c.obs_entry <= c.obs_exit) {
            push(&mut out, ViolationCode::ConflictAreaOutOfDomain, format!("conflict area for {}", c.obstacle));
        }
        if sc.obstacle(&c.obstacle).is_none() {
            push(&mut out, ViolationCode::UnknownObstacle, format!("conflict area names {}", c.obstacle));
        }
    }
    if let Some([a, b]) = sc.road.intersection_interval {
        if !(dom.contains(a) && dom.contains(b) && a <= b) {
            push(&mut out, ViolationCode::IntersectionOutOfDomain, format!("[{a}, {b}]"));
        }
    }
    if let Some(id) = &sc.relevant_obstacle {
        if sc.obstacle(id).is_none() {
            push(&mut out, ViolationCode::UnknownObstacle, format!("relevant obstacle {id}"));
        }
    }
    if !(sc.ego_dims.0 > 0.0 && sc.ego_dims.1 > 0.0) {
        push(&mut out, ViolationCode::InvalidDimensions, "ego");
    }
    for o in &sc.obstacles {
        if !(o.length > 0.0 && o.width > 0.0) {
            push(&mut out, ViolationCode::InvalidDimensions, format!("obstacle {}", o.id));
        }
    }
    let b = &sc.state_bounds;
    let u = &sc.input_bounds;
    for (name, sp) in [
        ("s_dot", b.s_dot),
        ("s_ddot", b.s_ddot),
        ("s_dddot", b.s_dddot),
        ("d_dot", b.d_dot),
        ("u_long", u.u_long),
        ("u_lat", u.u_lat),
    ] {
        if sp.is_empty() || sp.lo.is_nan() || sp.hi.is_nan() {
            push(&mut out, ViolationCode::InvalidBounds, name);
        }
    }
    check_trajectory(&mut out, "ego", &sc.ego_trajectory, sc);
    if sc.ego_trajectory.states.first() != Some(&sc.ego_initial) {
        push(&mut out, ViolationCode::InitialStateMismatch, "ego_trajectory.states[0] != ego_initial");
    }
    if sc.forward_only && sc.ego_trajectory.states.iter().any(|x| x.s_dot < -1e-9) {
        push(&mut out, ViolationCode::ReverseMotion, "ego moves backwards");
    }
    for o in &sc.obstacles {
        // Recordings may be shorter than the horizon; only their own consistency matters.
        if o.trajectory.states.len() != o.trajectory.inputs.len() + 1 {
            push(&mut out, ViolationCode::LengthMismatch, format!("obstacle {}", o.id));
            continue;
        }
        let r = o.trajectory.dynamics_residual(sc.dt);
        if r > DYN_TOL {
            push(&mut out, ViolationCode::DynamicsMismatch, format!("obstacle {}: residual {r:.3e}", o.id));
        }
    }
    out
}
