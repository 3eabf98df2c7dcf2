//! Model predictive robustness: signed relative frequency of sampled
//! futures that satisfy a predicate.

use std::cell::RefCell;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::abstraction::Proposition;
use crate::predicates::{truth_at, PredicateError};
use crate::stl::{robustness, FnSignal, SignalView, ROBUSTNESS_EPS};
use crate::world_model::{Scenario, Span, State, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    pub n_samples: usize,
    /// Seconds.
    pub horizon_pred: f64,
    pub v_window: f64,
    pub d_window_high: f64,
    pub d_window_low: f64,
    pub d_dot_window_high: f64,
    pub d_dot_window_low: f64,
    pub v_switch: f64,
    pub rng_seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            n_samples: 1500,
            horizon_pred: 1.56,
            v_window: 17.25,
            d_window_high: 5.0,
            d_window_low: 1.5,
            d_dot_window_high: 3.0,
            d_dot_window_low: 0.2,
            v_switch: 4.0,
            rng_seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessEstimate {
    pub value: f64,
    pub compliant_count: usize,
    pub total_count: usize,
    pub truth: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSet {
    pub terminal: Vec<State>,
    /// Step index of the terminal states.
    pub step: usize,
    pub attempts: usize,
    /// Fewer than `n_samples` survived rejection.
    pub short: bool,
    /// Obstacle states at `step` come from constant-velocity extrapolation.
    pub extrapolated: bool,
}

/// Steps spanned by one prediction.
pub fn prediction_steps(cfg: &SampleConfig, dt: f64) -> usize {
    ((cfg.horizon_pred / dt) - 1e-9).ceil().max(1.0) as usize
}

fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Independent stream per `(seed, k, pred_id)`.
pub fn stream(seed: u64, k: usize, pred_id: &str) -> ChaCha8Rng {
    let mut s = [0u8; 32];
    s[..8].copy_from_slice(&seed.to_le_bytes());
    s[8..16].copy_from_slice(&(k as u64).to_le_bytes());
    s[16..24].copy_from_slice(&fnv1a(pred_id).to_le_bytes());
    ChaCha8Rng::from_seed(s)
}

fn uniform(rng: &mut ChaCha8Rng, w: Span) -> f64 {
    if w.width() <= 0.0 {
        w.lo
    } else {
        rng.gen_range(w.lo..=w.hi)
    }
}

/// Quartic `s(t)` from `(s0, v0, a0)` to `(v_T, a_T = 0)` at `T`.
fn quartic(s0: f64, v0: f64, a0: f64, vt: f64, t_end: f64) -> [f64; 5] {
    let t = t_end;
    // v(t) = v0 + a0 t + 3 c3 t² + 4 c4 t³ ; a(t) = a0 + 6 c3 t + 12 c4 t²
    let dv = vt - v0 - a0 * t;
    let da = -a0;
    let c4 = (da * t - 2.0 * dv) / (4.0 * t * t * t);
    let c3 = (dv - 4.0 * c4 * t * t * t) / (3.0 * t * t);
    [s0, v0, a0 / 2.0, c3, c4]
}

/// Quintic from `(x0, v0, a0)` to `(x_T, v_T, a_T = 0)` at `T`.
fn quintic(x0: f64, v0: f64, a0: f64, xt: f64, vt: f64, t_end: f64) -> [f64; 6] {
    let t = t_end;
    let (t2, t3) = (t * t, t * t * t);
    let c0 = x0;
    let c1 = v0;
    let c2 = a0 / 2.0;
    let r0 = xt - (c0 + c1 * t + c2 * t2);
    let r1 = vt - (c1 + 2.0 * c2 * t);
    let r2 = -2.0 * c2;
    let c3 = (20.0 * r0 - 8.0 * r1 * t + r2 * t2) / (2.0 * t3);
    let c4 = (-30.0 * r0 + 14.0 * r1 * t - 2.0 * r2 * t2) / (2.0 * t3 * t);
    let c5 = (12.0 * r0 - 6.0 * r1 * t + r2 * t2) / (2.0 * t3 * t2);
    [c0, c1, c2, c3, c4, c5]
}

/// Value and first three derivatives of a polynomial.
fn poly(c: &[f64], t: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (d, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (i, ci) in c.iter().enumerate().skip(d) {
            let mut f = 1.0;
            for j in 0..d {
                f *= (i - j) as f64;
            }
            acc += ci * f * t.powi((i - d) as i32);
        }
        *slot = acc;
    }
    out
}

/// Sample terminal states of polynomial futures starting at `x` (step `k`).
pub fn sample_from(sc: &Scenario, x: &State, k: usize, cfg: &SampleConfig, rng: &mut ChaCha8Rng) -> SampleSet {
    let n_pred = prediction_steps(cfg, sc.dt);
    let t_end = n_pred as f64 * sc.dt;
    let low = x.s_dot < cfg.v_switch;
    let (dw, ddw) = if low { (cfg.d_window_low, cfg.d_dot_window_low) } else { (cfg.d_window_high, cfg.d_dot_window_high) };
    let v_lo = if sc.forward_only { (x.s_dot - cfg.v_window).max(0.0) } else { x.s_dot - cfg.v_window };
    let v_win = Span::new(v_lo, x.s_dot + cfg.v_window);
    let d_win = Span::new(x.d - dw, x.d + dw);
    let dd_win = Span::new(-ddw, ddw);
    let xb = &sc.state_bounds;
    let tol = 1e-6;
    let mut terminal = Vec::with_capacity(cfg.n_samples);
    let max_attempts = cfg.n_samples.saturating_mul(10).max(1);
    let mut attempts = 0;
    while terminal.len() < cfg.n_samples && attempts < max_attempts {
        attempts += 1;
        let vt = uniform(rng, v_win);
        let dt_target = uniform(rng, d_win);
        let ddt_target = uniform(rng, dd_win);
        let lon = quartic(x.s, x.s_dot, x.s_ddot, vt, t_end);
        let travel = poly(&lon, t_end)[0] - x.s;
        let lat = if low {
            // Lateral motion tied to longitudinal progress.
            quintic(x.d, 0.0, 0.0, dt_target, 0.0, 1.0)
        } else {
            quintic(x.d, x.d_dot, 0.0, dt_target, ddt_target, t_end)
        };
        let mut ok = true;
        let mut last = *x;
        for i in 1..=n_pred {
            let t = i as f64 * sc.dt;
            let [s, v, a, j] = poly(&lon, t);
            let (d, dd) = if low {
                if travel.abs() > 1e-6 {
                    let [d, dp, _, _] = poly(&lat, ((s - x.s) / travel).clamp(0.0, 1.0));
                    (d, dp * v / travel)
                } else {
                    (x.d, 0.0)
                }
            } else {
                let [d, dd, _, _] = poly(&lat, t);
                (d, dd)
            };
            let st = State {
                s,
                s_dot: v,
                s_ddot: a,
                s_dddot: j,
                d,
                d_dot: dd,
                theta: dd.atan2(v.max(1e-9)),
                t_index: k + i,
            };
            if !xb.admits(&st, tol) {
                ok = false;
                break;
            }
            last = st;
        }
        if ok {
            terminal.push(last);
        }
    }
    let step = k + n_pred;
    let extrapolated = sc.obstacles.iter().any(|o| o.state_at(step, sc.dt).1);
    SampleSet { short: terminal.len() < cfg.n_samples, terminal, step, attempts, extrapolated }
}

/// Futures of the planned ego state at `k`.
pub fn sample_futures(sc: &Scenario, k: usize, cfg: &SampleConfig) -> SampleSet {
    let x = sc.ego_trajectory.states[k.min(sc.ego_trajectory.horizon())];
    let mut rng = stream(cfg.rng_seed, k, "");
    sample_from(sc, &x, k, cfg, &mut rng)
}

fn signed(truth: bool, compliant: usize, total: usize) -> f64 {
    if total == 0 {
        return if truth { ROBUSTNESS_EPS } else { -ROBUSTNESS_EPS };
    }
    let v = if truth { compliant as f64 / total as f64 } else { -((total - compliant) as f64) / total as f64 };
    if v == 0.0 {
        if truth {
            ROBUSTNESS_EPS
        } else {
            -ROBUSTNESS_EPS
        }
    } else {
        v
    }
}

/// Robustness of `pred_id` at step `k` of `traj`.
pub fn mpr_on(pred_id: &str, sc: &Scenario, traj: &Trajectory, k: usize, cfg: &SampleConfig) -> Result<RobustnessEstimate, PredicateError> {
    let x = traj.states[k.min(traj.horizon())];
    let (truth, _) = truth_at(pred_id, sc, k, &x)?;
    let mut rng = stream(cfg.rng_seed, k, pred_id);
    let set = sample_from(sc, &x, k, cfg, &mut rng);
    let mut compliant = 0;
    for st in &set.terminal {
        if truth_at(pred_id, sc, set.step, st)?.0 {
            compliant += 1;
        }
    }
    let total = set.terminal.len();
    Ok(RobustnessEstimate { value: signed(truth, compliant, total), compliant_count: compliant, total_count: total, truth })
}

/// Robustness of `pred_id` at step `k` of the scenario's planned trajectory.
pub fn mpr_robustness(pred_id: &str, sc: &Scenario, k: usize, cfg: &SampleConfig) -> Result<RobustnessEstimate, PredicateError> {
    mpr_on(pred_id, sc, &sc.ego_trajectory, k, cfg)
}

/// Lazily evaluated MPR signal over a trajectory.
pub struct MprSignal<'a> {
    sc: &'a Scenario,
    traj: &'a Trajectory,
    cfg: &'a SampleConfig,
    truth: RefCell<HashMap<(String, usize), bool>>,
    rob: RefCell<HashMap<(String, usize), f64>>,
}

impl<'a> MprSignal<'a> {
    pub fn new(sc: &'a Scenario, traj: &'a Trajectory, cfg: &'a SampleConfig) -> Self {
        MprSignal { sc, traj, cfg, truth: RefCell::default(), rob: RefCell::default() }
    }
}

impl SignalView for MprSignal<'_> {
    fn len(&self) -> usize {
        self.traj.states.len()
    }

    fn eval(&self, pred: &str, k: usize) -> bool {
        let key = (pred.to_string(), k);
        if let Some(v) = self.truth.borrow().get(&key) {
            return *v;
        }
        let v = truth_at(pred, self.sc, k, &self.traj.states[k]).map(|r| r.0).unwrap_or(false);
        self.truth.borrow_mut().insert(key, v);
        v
    }

    fn rob(&self, pred: &str, k: usize) -> f64 {
        let key = (pred.to_string(), k);
        if let Some(v) = self.rob.borrow().get(&key) {
            return *v;
        }
        let v = mpr_on(pred, self.sc, self.traj, k, self.cfg).map(|e| e.value).unwrap_or(-1.0);
        self.rob.borrow_mut().insert(key, v);
        v
    }
}

/// Robustness of a proposition's subformula at the window start `tv`.
pub fn proposition_robustness(prop: &Proposition, sig: &dyn SignalView, tv: usize) -> f64 {
    robustness(&prop.subformula, sig, tv.min(sig.horizon()))
}

/// Same as [`proposition_robustness`] with injected per-predicate values.
pub fn proposition_robustness_stub(prop: &Proposition, len: usize, tv: usize, rob: impl Fn(&str, usize) -> f64) -> f64 {
    let sig = FnSignal::new(len, |p: &str, k: usize| rob(p, k) > 0.0, |p: &str, k: usize| rob(p, k));
    robustness(&prop.subformula, &sig, tv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    Interstate,
    Intersection,
}

/// Feature vector for regressor training; obstacle fields are present only
/// for ego-obstacle predicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Features {
    pub location: Location,
    pub characteristic: f64,
    pub ego_length: f64,
    pub ego_width: f64,
    pub ego_state: [f64; 7],
    pub ego_input: [f64; 2],
    pub ego_lane_left: f64,
    pub ego_lane_right: f64,
    pub ego_road_left: Option<f64>,
    pub ego_road_right: Option<f64>,
    pub ego_entry: Option<f64>,
    pub ego_exit: Option<f64>,
    pub ego_stop: Option<f64>,
    pub obstacle: Option<ObstacleFeatures>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObstacleFeatures {
    pub length: f64,
    pub width: f64,
    pub state: [f64; 7],
    pub lane_left: f64,
    pub lane_right: f64,
    pub road_left: Option<f64>,
    pub road_right: Option<f64>,
    pub entry: Option<f64>,
    pub exit: Option<f64>,
    pub delta_s: f64,
    pub delta_d: f64,
    pub delta_s_obs: Option<f64>,
    pub delta_d_obs: Option<f64>,
    pub delta_v_s: f64,
    pub delta_v_d: f64,
}

/// Default stop-line distance when no stop line lies ahead (m).
pub const NO_STOP_LINE_DISTANCE: f64 = 200.0;

fn state_vec(x: &State) -> [f64; 7] {
    [x.s, x.s_dot, x.s_ddot, x.s_dddot, x.d, x.d_dot, x.theta]
}

pub fn extract_features(pred_id: &str, sc: &Scenario, k: usize) -> Result<Features, PredicateError> {
    let def = crate::predicates::lookup(pred_id)?;
    let x = sc.ego_trajectory.states[k.min(sc.ego_trajectory.horizon())];
    let u = sc.ego_trajectory.inputs.get(k).copied().unwrap_or(crate::world_model::Input::ZERO);
    let location = if sc.road.intersection_interval.is_some() { Location::Intersection } else { Location::Interstate };
    let inter = location == Location::Intersection;
    let (truth, _) = truth_at(pred_id, sc, k, &x)?;
    let lane = sc.road.lane_at(x.s);
    let road = sc.road.road_at(x.s);
    let stop = sc.road.stop_lines.iter().filter(|l| **l >= x.s).fold(None, |m: Option<f64>, l| Some(m.map_or(*l, |m| m.min(*l))));
    let obstacle = match (def.arity, sc.relevant_obstacle()) {
        (crate::predicates::Arity::EgoObstacle, Some(o)) => {
            let (ox, _) = o.state_at(k, sc.dt);
            let ca = sc.road.conflict_area(&o.id);
            let olane = sc.road.lane_at(ox.s);
            let oroad = sc.road.road_at(ox.s);
            let crossing = o.path == crate::world_model::ObstaclePath::Crossing;
            Some(ObstacleFeatures {
                length: o.length,
                width: o.width,
                state: state_vec(&ox),
                lane_left: olane.hi - ox.d,
                lane_right: ox.d - olane.lo,
                road_left: (!inter).then_some(oroad.hi - ox.d),
                road_right: (!inter).then_some(ox.d - oroad.lo),
                entry: ca.filter(|_| inter).map(|c| c.obs_entry - ox.s),
                exit: ca.filter(|_| inter).map(|c| c.obs_exit - ox.s),
                delta_s: if crossing { ca.map_or(0.0, |c| c.s_entry - x.s) } else { ox.s - x.s },
                delta_d: if crossing { 0.0 } else { ox.d - x.d },
                delta_s_obs: inter.then(|| ca.map_or(0.0, |c| c.obs_entry - ox.s)),
                delta_d_obs: inter.then_some(0.0),
                delta_v_s: ox.s_dot - x.s_dot,
                delta_v_d: ox.d_dot - x.d_dot,
            })
        }
        _ => None,
    };
    let conflict = sc.relevant_obstacle().and_then(|o| sc.road.conflict_area(&o.id));
    Ok(Features {
        location,
        characteristic: if truth { 1.0 } else { -1.0 },
        ego_length: sc.ego_length(),
        ego_width: sc.ego_width(),
        ego_state: state_vec(&x),
        ego_input: [u.u_long, u.u_lat],
        ego_lane_left: lane.hi - x.d,
        ego_lane_right: x.d - lane.lo,
        ego_road_left: (!inter).then_some(road.hi - x.d),
        ego_road_right: (!inter).then_some(x.d - road.lo),
        ego_entry: inter.then(|| sc.road.intersection_interval.map_or(0.0, |[a, _]| a - x.s)),
        ego_exit: inter.then(|| sc.road.intersection_interval.map_or(0.0, |[_, b]| b - x.s)),
        ego_stop: inter.then(|| stop.map_or(NO_STOP_LINE_DISTANCE, |l| l - x.s)),
        obstacle: obstacle.map(|mut o| {
            if conflict.is_none() {
                o.entry = None;
                o.exit = None;
            }
            o
        }),
    })
}
