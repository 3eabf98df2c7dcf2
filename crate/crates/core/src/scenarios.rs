//! Bundled scenario builders: reconstructions of the stop-line, multi-rule
//! and priority exemplars plus a few regression cases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::world_model::{
    ConflictArea, Flag, InputBounds, Obstacle, ObstaclePath, Profile, RoadContext, RoadModel, Scenario, State,
    StateBounds, Trajectory, Input, step_dynamics,
};

pub const DT: f64 = 0.2;
pub const HORIZON: usize = 20;
pub const EGO_DIMS: (f64, f64) = (4.5, 1.8);

/// Straight single-lane road along the x-axis.
pub fn straight_road(length: f64, speed_limit: f64) -> RoadModel {
    RoadModel {
        reference_path: vec![[0.0, 0.0], [length, 0.0]],
        lane_left: Profile::Constant(1.75),
        lane_right: Profile::Constant(-1.75),
        road_left: Profile::Constant(1.75),
        road_right: Profile::Constant(-1.75),
        stop_lines: Vec::new(),
        speed_limit: vec![[0.0, speed_limit]],
        conflict_areas: Vec::new(),
        intersection_interval: None,
        context: RoadContext::default(),
    }
}

/// Constant-acceleration plan (zero jerk) over `steps`.
pub fn constant_accel(s0: f64, v0: f64, a: f64, steps: usize) -> Trajectory {
    let x0 = State { s: s0, s_dot: v0, s_ddot: a, ..Default::default() };
    Trajectory::rollout(x0, &vec![Input::ZERO; steps], DT)
}

/// Plan tracking a per-step acceleration target with a jerk-limited snap
/// controller.
pub fn tracked(x0: State, accel: impl Fn(usize, &State) -> f64, steps: usize) -> Trajectory {
    let bounds = StateBounds::default();
    let mut x = x0;
    let mut inputs = Vec::with_capacity(steps);
    for k in 0..steps {
        let jt = bounds.s_dddot.clamp((accel(k, &x) - x.s_ddot) / (2.0 * DT));
        let u = Input { u_long: (jt - x.s_dddot) / DT, u_lat: 0.0 };
        x = step_dynamics(&x, &u, DT);
        inputs.push(u);
    }
    Trajectory::rollout(x0, &inputs, DT)
}

fn scenario(name: &str, road: RoadModel, ego: Trajectory, obstacles: Vec<Obstacle>, rules: &[&str]) -> Scenario {
    Scenario {
        name: name.to_string(),
        road,
        ego_initial: ego.states[0],
        ego_trajectory: ego,
        relevant_obstacle: obstacles.first().map(|o| o.id.clone()),
        obstacles,
        ego_dims: EGO_DIMS,
        dt: DT,
        horizon: HORIZON,
        state_bounds: StateBounds::default(),
        input_bounds: InputBounds::default(),
        forward_only: true,
        rules: rules.iter().map(|r| r.to_string()).collect(),
    }
}

fn vehicle(id: &str, traj: Trajectory, path: ObstaclePath) -> Obstacle {
    Obstacle { id: id.to_string(), trajectory: traj, length: EGO_DIMS.0, width: EGO_DIMS.1, path }
}

/// Ego approaches a stop sign, slows to a crawl and rolls over the line.
pub fn stop_line() -> Scenario {
    let mut road = straight_road(200.0, 20.0);
    road.stop_lines = vec![40.0];
    road.context.at_traffic_sign_stop = Flag::Constant(true);
    let ego = tracked(
        State::cruising(16.16, 10.0, 0.0),
        |k, x| if k < 5 || x.s_dot < 4.0 { 0.0 } else { -6.0 },
        HORIZON,
    );
    scenario("stop_line", road, ego, Vec::new(), &["IN1"])
}

/// Ego accelerates behind a leader, losing the safe distance and exceeding
/// the braking-distance speed limit.
pub fn multi_rule() -> Scenario {
    let mut road = straight_road(300.0, 36.0);
    road.context.braking_speed_limit = Some(26.9);
    let ego = constant_accel(0.0, 24.0, 1.0, HORIZON);
    let lead_s = 0.0 + EGO_DIMS.0 + 20.5;
    let lead = vehicle("leader", constant_accel(lead_s, 24.0, 0.0, HORIZON), ObstaclePath::EgoRoad);
    scenario("multi_rule", road, ego, vec![lead], &["G1", "G3"])
}

/// Ego enters an intersection conflict area just before a crossing vehicle
/// with priority.
pub fn priority() -> Scenario {
    let mut road = straight_road(150.0, 14.0);
    road.intersection_interval = Some([35.0, 70.0]);
    road.conflict_areas = vec![ConflictArea {
        obstacle: "crossing".into(),
        s_entry: 40.0,
        s_exit: 47.0,
        obs_entry: 50.0,
        obs_exit: 57.0,
    }];
    road.context.has_priority_conflict = Flag::Constant(true);
    let ego = constant_accel(28.8, 5.0, 0.0, HORIZON);
    let crossing = vehicle("crossing", constant_accel(30.0, 8.0, 0.0, HORIZON), ObstaclePath::Crossing);
    scenario("priority", road, ego, vec![crossing], &["IN4s"])
}

/// Steady following at a comfortable distance; nothing to repair.
pub fn compliant_follow() -> Scenario {
    let road = straight_road(300.0, 25.0);
    let ego = constant_accel(0.0, 20.0, 0.0, HORIZON);
    let lead = vehicle("leader", constant_accel(40.0, 20.0, 0.0, HORIZON), ObstaclePath::EgoRoad);
    scenario("compliant_follow", road, ego, vec![lead], &["G1", "G3"])
}

/// The lane speed limit drops ahead of a cruising ego.
pub fn speed_limit_drop() -> Scenario {
    let mut road = straight_road(300.0, 25.0);
    road.speed_limit = vec![[0.0, 25.0], [60.0, 17.0]];
    scenario("speed_limit_drop", road, constant_accel(0.0, 20.0, 0.0, HORIZON), Vec::new(), &["G3"])
}

/// The leader brakes while the ego keeps its speed.
pub fn leader_braking() -> Scenario {
    let road = straight_road(300.0, 25.0);
    let ego = constant_accel(0.0, 16.0, 0.0, HORIZON);
    let lead = vehicle("leader", constant_accel(32.0, 16.0, -2.0, HORIZON), ObstaclePath::EgoRoad);
    scenario("leader_braking", road, ego, vec![lead], &["G1"])
}

/// Ego already stopping properly at the stop sign.
pub fn stop_line_compliant() -> Scenario {
    let mut road = straight_road(200.0, 20.0);
    road.stop_lines = vec![40.0];
    road.context.at_traffic_sign_stop = Flag::Constant(true);
    scenario("stop_line_compliant", road, constant_accel(20.0, 6.0, -1.5, HORIZON), Vec::new(), &["IN1"])
}

pub fn bundled() -> Vec<Scenario> {
    vec![
        stop_line(),
        multi_rule(),
        priority(),
        compliant_follow(),
        speed_limit_drop(),
        leader_braking(),
        stop_line_compliant(),
    ]
}

/// Random perturbation of a bundled scenario (initial speed, acceleration
/// and obstacle placement), deterministic in `seed`.
pub fn fuzzed(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = bundled();
    let mut sc = base[rng.gen_range(0..base.len())].clone();
    let x0 = sc.ego_initial;
    let v0 = (x0.s_dot + rng.gen_range(-2.0..2.0)).max(1.0);
    let mut a = x0.s_ddot + rng.gen_range(-0.5..0.5);
    // Keep the plan moving forward over the horizon.
    let t = HORIZON as f64 * DT;
    if v0 + a * t < 0.0 {
        a = -v0 / t;
    }
    let ego = constant_accel(x0.s + rng.gen_range(-3.0..3.0), v0, a, HORIZON);
    sc.ego_initial = ego.states[0];
    sc.ego_trajectory = ego;
    for o in &mut sc.obstacles {
        let y0 = o.trajectory.states[0];
        let shift = rng.gen_range(-4.0..4.0);
        let dv = rng.gen_range(-1.5..1.5);
        o.trajectory = constant_accel(y0.s + shift, (y0.s_dot + dv).max(0.0), y0.s_ddot.max(-(y0.s_dot + dv).max(0.0) / t), HORIZON);
    }
    sc.name = format!("{}_fuzz{seed}", sc.name);
    sc
}
