//! Convex repair inside a driving corridor: two decoupled QPs (longitudinal
//! jerk chain, lateral double integrator) solved with clarabel, then spliced
//! onto the initial plan and re-verified.

use std::collections::BTreeMap;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predicates::{monitor_signal, PredicateError};
use crate::reach::Corridor;
use crate::stl::{time_to_violation, Formula, Tv};
use crate::world_model::{Input, Scenario, Span, Trajectory};

const TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QpWeights {
    pub w_jerk: f64,
    pub w_acc: f64,
    /// Deviation from the initial plan's position profile.
    pub w_dev: f64,
    /// Input regularisation (snap / lateral velocity).
    pub w_snap: f64,
}

impl Default for QpWeights {
    fn default() -> Self {
        QpWeights { w_jerk: 1.0, w_acc: 0.5, w_dev: 0.1, w_snap: 1e-3 }
    }
}

/// Sparse row `Σ coef·z[idx]`.
pub type Row = Vec<(usize, f64)>;

/// `min ½ zᵀPz + qᵀz` s.t. `eq` rows `= b`, `ineq` rows `≤ b`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QpProblem {
    pub n: usize,
    /// Upper-triangular entries of `P`, duplicates summed.
    pub p: BTreeMap<(usize, usize), f64>,
    pub q: Vec<f64>,
    pub eq: Vec<(Row, f64)>,
    pub ineq: Vec<(Row, f64)>,
}

impl QpProblem {
    pub fn new(n: usize) -> Self {
        QpProblem { n, q: vec![0.0; n], ..Default::default() }
    }

    /// Adds `w·(z_i − r)²` to the cost.
    pub fn add_square(&mut self, i: usize, w: f64, r: f64) {
        if w == 0.0 {
            return;
        }
        *self.p.entry((i, i)).or_insert(0.0) += 2.0 * w;
        self.q[i] -= 2.0 * w * r;
    }

    pub fn add_bounds(&mut self, i: usize, span: Span) {
        if span.lo.is_finite() {
            self.ineq.push((vec![(i, -1.0)], -span.lo));
        }
        if span.hi.is_finite() {
            self.ineq.push((vec![(i, 1.0)], span.hi));
        }
    }

    pub fn constraint_count(&self) -> usize {
        self.eq.len() + self.ineq.len()
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        let mut v: f64 = self.q.iter().zip(z).map(|(a, b)| a * b).sum();
        for (&(i, j), &p) in &self.p {
            let m = if i == j { 0.5 } else { 1.0 };
            v += m * p * z[i] * z[j];
        }
        v
    }

    /// Largest equality or inequality violation at `z`.
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        let dot = |r: &Row| r.iter().map(|(i, c)| c * z[*i]).sum::<f64>();
        let e = self.eq.iter().map(|(r, b)| (dot(r) - b).abs()).fold(0.0, f64::max);
        let i = self.ineq.iter().map(|(r, b)| (dot(r) - b).max(0.0)).fold(0.0, f64::max);
        e.max(i)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("QP is infeasible")]
    Infeasible,
    #[error("QP solver did not converge: {0}")]
    NumericalBreakdown(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QpSolution {
    pub z: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    pub r_prim: f64,
    pub r_dual: f64,
}

pub fn solve_qp(qp: &QpProblem) -> Result<QpSolution, QpError> {
    let n = qp.n;
    let (pi, pj, pv): (Vec<usize>, Vec<usize>, Vec<f64>) = {
        let mut a = (Vec::new(), Vec::new(), Vec::new());
        for (&(i, j), &v) in &qp.p {
            let (i, j) = if i <= j { (i, j) } else { (j, i) };
            a.0.push(i);
            a.1.push(j);
            a.2.push(v);
        }
        a
    };
    let p = CscMatrix::new_from_triplets(n, n, pi, pj, pv);
    let m = qp.constraint_count();
    let (mut ai, mut aj, mut av, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::with_capacity(m));
    for (r, (row, rhs)) in qp.eq.iter().chain(&qp.ineq).enumerate() {
        for (j, c) in row {
            ai.push(r);
            aj.push(*j);
            av.push(*c);
        }
        b.push(*rhs);
    }
    let a = CscMatrix::new_from_triplets(m, n, ai, aj, av);
    let mut cones = Vec::new();
    if !qp.eq.is_empty() {
        cones.push(SupportedConeT::ZeroConeT(qp.eq.len()));
    }
    if !qp.ineq.is_empty() {
        cones.push(SupportedConeT::NonnegativeConeT(qp.ineq.len()));
    }
    let settings = DefaultSettings {
        verbose: false,
        max_iter: 10_000,
        tol_feas: 1e-8,
        tol_gap_abs: 1e-8,
        tol_gap_rel: 1e-8,
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&p, &qp.q, &a, &b, &cones, settings)
        .map_err(|e| QpError::NumericalBreakdown(e.to_string()))?;
    solver.solve();
    let sol = &solver.solution;
    match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            if qp.max_violation(&sol.x) > TOL {
                return Err(QpError::NumericalBreakdown(format!("residual {}", qp.max_violation(&sol.x))));
            }
            Ok(QpSolution {
                objective: qp.objective(&sol.x),
                z: sol.x.clone(),
                iterations: sol.iterations,
                r_prim: sol.r_prim,
                r_dual: sol.r_dual,
            })
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => Err(QpError::Infeasible),
        s => Err(QpError::NumericalBreakdown(format!("{s:?}"))),
    }
}

/// A linear integrator chain `x⁺ = A x + B u` over `steps` transitions.
struct Chain<'a> {
    a: &'a [&'a [f64]],
    b: &'a [f64],
}

impl Chain<'_> {
    fn nx(&self) -> usize {
        self.b.len()
    }

    fn x(&self, i: usize, c: usize) -> usize {
        i * self.nx() + c
    }

    fn u(&self, steps: usize, i: usize) -> usize {
        (steps + 1) * self.nx() + i
    }

    fn problem(&self, x0: &[f64], steps: usize) -> QpProblem {
        let nx = self.nx();
        let mut qp = QpProblem::new((steps + 1) * nx + steps);
        for (c, v) in x0.iter().enumerate() {
            qp.eq.push((vec![(self.x(0, c), 1.0)], *v));
        }
        for i in 0..steps {
            for r in 0..nx {
                let mut row: Row = vec![(self.x(i + 1, r), 1.0)];
                for c in 0..nx {
                    if self.a[r][c] != 0.0 {
                        row.push((self.x(i, c), -self.a[r][c]));
                    }
                }
                row.push((self.u(steps, i), -self.b[r]));
                qp.eq.push((row, 0.0));
            }
        }
        qp
    }
}

/// Decoupled longitudinal and lateral problems over `[k_cut, h]`.
#[derive(Debug, Clone)]
pub struct RepairQp {
    pub k_cut: usize,
    pub steps: usize,
    pub longitudinal: QpProblem,
    pub lateral: QpProblem,
}

fn shrink(span: Span, m: f64) -> Span {
    let s = Span::new(span.lo + m, span.hi - m);
    if s.is_empty() {
        let c = 0.5 * (span.lo + span.hi);
        Span::point(c)
    } else {
        s
    }
}

pub fn build_qp(sc: &Scenario, corridor: &Corridor, k_cut: usize, weights: &QpWeights, margin: f64) -> RepairQp {
    let dt = sc.dt;
    let h = sc.ego_trajectory.horizon();
    let steps = h - k_cut;
    let x0 = sc.ego_trajectory.states[k_cut];
    let xb = &sc.state_bounds;
    let ub = &sc.input_bounds;
    let v_box = if sc.forward_only { xb.s_dot.intersect(&Span::new(0.0, f64::INFINITY)) } else { xb.s_dot };

    let (dt2, dt3, dt4) = (dt * dt, dt * dt * dt, dt * dt * dt * dt);
    let rows: [&[f64]; 4] =
        [&[1.0, dt, dt2 / 2.0, dt3 / 6.0], &[0.0, 1.0, dt, dt2 / 2.0], &[0.0, 0.0, 1.0, dt], &[0.0, 0.0, 0.0, 1.0]];
    let long = Chain { a: &rows, b: &[dt4 / 24.0, dt3 / 6.0, dt2 / 2.0, dt] };
    let mut lq = long.problem(&[x0.s, x0.s_dot, x0.s_ddot, x0.s_dddot], steps);
    for i in 1..=steps {
        let bx = corridor.at(k_cut + i);
        let s_ref = sc.ego_trajectory.states[k_cut + i].s;
        lq.add_bounds(long.x(i, 0), shrink(bx.s, margin));
        lq.add_bounds(long.x(i, 1), shrink(bx.sdot, margin).intersect(&v_box));
        lq.add_bounds(long.x(i, 2), xb.s_ddot);
        lq.add_bounds(long.x(i, 3), xb.s_dddot);
        lq.add_square(long.x(i, 0), weights.w_dev, s_ref);
        lq.add_square(long.x(i, 2), weights.w_acc, 0.0);
        lq.add_square(long.x(i, 3), weights.w_jerk, 0.0);
    }
    for i in 0..steps {
        lq.add_bounds(long.u(steps, i), ub.u_long);
        lq.add_square(long.u(steps, i), weights.w_snap, 0.0);
    }

    let lrows: [&[f64]; 2] = [&[1.0, dt], &[0.0, 1.0]];
    let lat = Chain { a: &lrows, b: &[dt2 / 2.0, dt] };
    let mut dq = lat.problem(&[x0.d, x0.d_dot], steps);
    for i in 1..=steps {
        let bx = corridor.at(k_cut + i);
        let d_ref = sc.ego_trajectory.states[k_cut + i].d;
        dq.add_bounds(lat.x(i, 0), shrink(bx.d, margin));
        dq.add_bounds(lat.x(i, 1), xb.d_dot);
        dq.add_square(lat.x(i, 0), weights.w_dev, d_ref);
        dq.add_square(lat.x(i, 1), weights.w_snap, 0.0);
    }
    for i in 0..steps {
        dq.add_bounds(lat.u(steps, i), ub.u_lat);
        dq.add_square(lat.u(steps, i), weights.w_acc, 0.0);
    }
    RepairQp { k_cut, steps, longitudinal: lq, lateral: dq }
}

/// Inputs of the repaired segment, `[k_cut, h − 1]`.
pub fn solve_repair(sc: &Scenario, qp: &RepairQp) -> Result<Vec<Input>, QpError> {
    let long = solve_qp(&qp.longitudinal)?;
    let lat = solve_qp(&qp.lateral)?;
    let (lu0, du0) = ((qp.steps + 1) * 4, (qp.steps + 1) * 2);
    let ub = &sc.input_bounds;
    Ok((0..qp.steps)
        .map(|i| Input { u_long: ub.u_long.clamp(long.z[lu0 + i]), u_lat: ub.u_lat.clamp(lat.z[du0 + i]) })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("repaired trajectory violates the rules at step {0}")]
    RuleViolated(usize),
    #[error("repaired trajectory leaves the admissible set at step {0}")]
    Inadmissible(usize),
    #[error("repaired trajectory collides at step {0}")]
    Collision(usize),
    #[error(transparent)]
    Predicate(#[from] PredicateError),
}

/// The initial plan up to `k_cut` followed by `segment`.
pub fn splice(sc: &Scenario, segment: &[Input], k_cut: usize) -> Trajectory {
    let base = &sc.ego_trajectory;
    let mut inputs = base.inputs[..k_cut].to_vec();
    inputs.extend_from_slice(segment);
    Trajectory::rollout_from(&base.states[..=k_cut], &inputs, sc.dt)
}

/// Monitor, admissibility and collision check of a full trajectory.
pub fn verify(sc: &Scenario, traj: &Trajectory, rule: &Formula, from: usize) -> Result<(), VerifyError> {
    for (k, x) in traj.states.iter().enumerate().skip(from) {
        if !sc.state_bounds.admits(x, TOL) || (sc.forward_only && x.s_dot < -TOL) || !sc.on_road(x) {
            return Err(VerifyError::Inadmissible(k));
        }
        if sc.collides(k, x) {
            return Err(VerifyError::Collision(k));
        }
    }
    if let Some(k) = traj.inputs.iter().skip(from).position(|u| !sc.input_bounds.admits(u, TOL)) {
        return Err(VerifyError::Inadmissible(from + k));
    }
    let sig = monitor_signal(&rule.predicate_ids(), sc, traj)?;
    match time_to_violation(rule, &sig, 0) {
        Tv::Inf => Ok(()),
        Tv::At(k) => Err(VerifyError::RuleViolated(k)),
    }
}

pub fn splice_and_verify(sc: &Scenario, segment: &[Input], k_cut: usize, rule: &Formula) -> Result<Trajectory, VerifyError> {
    let t = splice(sc, segment, k_cut);
    verify(sc, &t, rule, k_cut)?;
    Ok(t)
}
