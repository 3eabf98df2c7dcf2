//! Specification-compliant reachable sets on a fixed grid and driving-corridor extraction.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::abstraction::AbstractionResult;
use crate::predicates::{project_at, Projection};
use crate::sat::Valuation;
use crate::stl::Formula;
use crate::world_model::{Scenario, Span, State};


/// Axis-aligned box in `(s, ṡ, d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub s: Span,
    pub sdot: Span,
    pub d: Span,
}

impl Cell {
    pub const EVERYTHING: Cell = Cell { s: Span::all(), sdot: Span::all(), d: Span::all() };

    pub fn new(s: Span, sdot: Span, d: Span) -> Self {
        Cell { s, sdot, d }
    }

    pub fn s_only(s: Span) -> Self {
        Cell { s, ..Cell::EVERYTHING }
    }

    pub fn sdot_only(sdot: Span) -> Self {
        Cell { sdot, ..Cell::EVERYTHING }
    }

    pub fn d_only(d: Span) -> Self {
        Cell { d, ..Cell::EVERYTHING }
    }

    pub fn contains(&self, s: f64, sdot: f64, d: f64) -> bool {
        self.s.contains(s) && self.sdot.contains(sdot) && self.d.contains(d)
    }

    pub fn contains_tol(&self, s: f64, sdot: f64, d: f64, tol: f64) -> bool {
        self.s.contains_tol(s, tol) && self.sdot.contains_tol(sdot, tol) && self.d.contains_tol(d, tol)
    }

    pub fn intersect(&self, o: &Cell) -> Option<Cell> {
        let c = Cell { s: self.s.intersect(&o.s), sdot: self.sdot.intersect(&o.sdot), d: self.d.intersect(&o.d) };
        (!c.s.is_empty() && !c.sdot.is_empty() && !c.d.is_empty()).then_some(c)
    }

    pub fn is_subset_of(&self, o: &Cell) -> bool {
        self.s.is_subset_of(&o.s) && self.sdot.is_subset_of(&o.sdot) && self.d.is_subset_of(&o.d)
    }

    pub fn hull(&self, o: &Cell) -> Cell {
        Cell { s: self.s.hull(&o.s), sdot: self.sdot.hull(&o.sdot), d: self.d.hull(&o.d) }
    }

    /// Sum of log side lengths, with a floor so degenerate sides stay finite.
    pub fn log_volume(&self) -> f64 {
        [self.s.width(), self.sdot.width(), self.d.width()].iter().map(|w| w.max(1e-6).ln()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReachConfig {
    pub grid_s: f64,
    pub grid_sdot: f64,
    pub grid_d: f64,
    /// Corridor boxes are shrunk by this much on finite faces (strict predicates).
    pub corridor_margin: f64,
}

impl Default for ReachConfig {
    fn default() -> Self {
        ReachConfig { grid_s: 0.5, grid_sdot: 0.5, grid_d: 0.25, corridor_margin: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintEntry {
    pub step: usize,
    pub source: String,
    /// Part of the source could not be projected and was dropped.
    pub relaxed: bool,
}

type Key = (i64, i64);

/// Per-step unions of cells for `τ ∈ [k_cut, h]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReachSet {
    pub k_cut: usize,
    pub tv: usize,
    pub steps: Vec<Vec<Cell>>,
    /// `parents[i][c]`: cells of step `i - 1` whose image meets cell `c` of step `i`.
    #[serde(skip)]
    pub parents: Vec<Vec<Vec<usize>>>,
    #[serde(skip)]
    keys: Vec<Vec<Key>>,
    pub constraint_log: Vec<ConstraintEntry>,
    pub accel: Vec<Span>,
    pub jerk: Vec<Span>,
    pub d_dot: Vec<Span>,
    #[serde(skip)]
    grid: (f64, f64),
}

impl ReachSet {
    pub fn at(&self, tau: usize) -> &[Cell] {
        &self.steps[tau - self.k_cut]
    }

    pub fn last_step(&self) -> usize {
        self.k_cut + self.steps.len() - 1
    }

    pub fn contains(&self, tau: usize, x: &State, tol: f64) -> bool {
        self.at(tau).iter().any(|c| c.contains_tol(x.s, x.s_dot, x.d, tol))
    }

    pub fn cell_count(&self) -> usize {
        self.steps.iter().map(Vec::len).sum()
    }

    /// `τ,s_lo,s_hi,sdot_lo,sdot_hi,d_lo,d_hi` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,s_lo,s_hi,sdot_lo,sdot_hi,d_lo,d_hi\n");
        for (i, cells) in self.steps.iter().enumerate() {
            for c in cells {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    self.k_cut + i,
                    c.s.lo,
                    c.s.hi,
                    c.sdot.lo,
                    c.sdot.hi,
                    c.d.lo,
                    c.d.hi
                );
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReachOutcome {
    Reach(ReachSet),
    /// First step with an empty set.
    Empty(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReachError {
    #[error("proposition s{0} has no projectable constraint")]
    ProjectionUnavailable(usize),
    #[error("no connected corridor through the reachable sets")]
    NoConnectedCorridor,
    #[error("reachable set is empty at step {0}")]
    EmptyAt(usize),
}

/// Constraint region of an NNF body at step `tau`; `None` when nothing can
/// be enforced per step (the constraint is dropped).
pub fn body_region(f: &Formula, sc: &Scenario, tau: usize) -> Option<Vec<Cell>> {
    match f {
        Formula::True => Some(vec![Cell::EVERYTHING]),
        Formula::False => Some(Vec::new()),
        Formula::Predicate { id, negated } => match project_at(id, sc, tau, !negated) {
            Ok(Projection::Region(cells)) => Some(cells),
            _ => None,
        },
        Formula::And(xs) => {
            let mut acc: Option<Vec<Cell>> = None;
            for x in xs {
                if let Some(r) = body_region(x, sc, tau) {
                    acc = Some(match acc {
                        None => r,
                        Some(a) => intersect_regions(&a, &r),
                    });
                }
            }
            acc
        }
        Formula::Or(xs) => {
            let mut out = Vec::new();
            for x in xs {
                out.extend(body_region(x, sc, tau)?);
            }
            Some(out)
        }
        // Windows starting at the current step constrain it directly.
        Formula::Globally(g, iv) | Formula::Historically(g, iv) if iv.lo == 0 => body_region(g, sc, tau),
        _ => None,
    }
}

fn intersect_regions(a: &[Cell], b: &[Cell]) -> Vec<Cell> {
    let mut out = Vec::new();
    for x in a {
        for y in b {
            if let Some(z) = x.intersect(y) {
                out.push(z);
            }
        }
    }
    out
}

/// Whether the body contains anything that cannot be projected.
fn has_relaxation(f: &Formula, sc: &Scenario, tau: usize) -> bool {
    match f {
        Formula::True | Formula::False => false,
        Formula::Predicate { .. } => body_region(f, sc, tau).is_none(),
        Formula::And(xs) | Formula::Or(xs) => xs.iter().any(|x| has_relaxation(x, sc, tau)),
        Formula::Globally(g, iv) | Formula::Historically(g, iv) if iv.lo == 0 => has_relaxation(g, sc, tau),
        _ => true,
    }
}

/// Pieces of `c` outside the open box `(fs, fd)`.
fn subtract(c: &Cell, fs: Span, fd: Span) -> Vec<Cell> {
    let overlap = c.s.hi > fs.lo && c.s.lo < fs.hi && c.d.hi > fd.lo && c.d.lo < fd.hi;
    if !overlap {
        return vec![*c];
    }
    let mut out = Vec::new();
    if c.s.lo <= fs.lo {
        out.push(Cell { s: Span::new(c.s.lo, fs.lo), ..*c });
    }
    if c.s.hi >= fs.hi {
        out.push(Cell { s: Span::new(fs.hi, c.s.hi), ..*c });
    }
    let mid = Span::new(c.s.lo.max(fs.lo), c.s.hi.min(fs.hi));
    if c.d.lo <= fd.lo {
        out.push(Cell { s: mid, d: Span::new(c.d.lo, fd.lo), ..*c });
    }
    if c.d.hi >= fd.hi {
        out.push(Cell { s: mid, d: Span::new(fd.hi, c.d.hi), ..*c });
    }
    out
}

fn grid_range(span: Span, g: f64) -> (i64, i64) {
    let lo = (span.lo / g).floor() as i64;
    let hi = ((span.hi / g).ceil() as i64 - 1).max(lo);
    (lo, hi)
}

fn grid_box(key: Key, grid: (f64, f64)) -> Cell {
    Cell {
        s: Span::new(key.0 as f64 * grid.0, (key.0 + 1) as f64 * grid.0),
        sdot: Span::new(key.1 as f64 * grid.1, (key.1 + 1) as f64 * grid.1),
        d: Span::all(),
    }
}

struct Constraint {
    prop: usize,
    body: Formula,
}

/// Propositions assigned `⊤` whose constraints reach can enforce.
fn active_constraints(valuation: &Valuation, ar: &AbstractionResult) -> Vec<Constraint> {
    let mut out = Vec::new();
    for (&j, &b) in &valuation.assignments {
        if !b || ar.is_aux(j) {
            continue;
        }
        let p = ar.proposition(j);
        if p.contains_past_only {
            continue;
        }
        if let Formula::Globally(body, iv) = &p.subformula {
            if iv.is_unbounded_from_zero() {
                out.push(Constraint { prop: j, body: (**body).clone() });
            }
        }
    }
    out
}

/// Sound enclosure of every admissible, collision-free trajectory from the
/// cut-off state that satisfies the valuation's `⊤` propositions on `[tv, h]`.
pub fn compute_reach(
    sc: &Scenario,
    k_cut: usize,
    valuation: &Valuation,
    ar: &AbstractionResult,
    tv: usize,
    cfg: &ReachConfig,
) -> Result<ReachOutcome, ReachError> {
    let h = sc.ego_trajectory.horizon();
    let constraints = active_constraints(valuation, ar);
    for c in &constraints {
        if (tv..=h).all(|t| body_region(&c.body, sc, t).is_none()) {
            return Err(ReachError::ProjectionUnavailable(c.prop));
        }
    }
    let x0 = sc.ego_trajectory.states[k_cut];
    let dt = sc.dt;
    let xb = &sc.state_bounds;
    let ub = &sc.input_bounds;
    let grid = (cfg.grid_s, cfg.grid_sdot);
    let (hl, hw) = (sc.ego_length() / 2.0, sc.ego_width() / 2.0);
    let road = Span::new(sc.road.road_right.min(), sc.road.road_left.max());
    let v_box = if sc.forward_only { xb.s_dot.intersect(&Span::new(0.0, f64::INFINITY)) } else { xb.s_dot };

    let mut rs = ReachSet {
        k_cut,
        tv,
        steps: vec![vec![Cell::new(Span::point(x0.s), Span::point(x0.s_dot), Span::point(x0.d))]],
        parents: vec![vec![Vec::new()]],
        keys: vec![vec![(i64::MIN, i64::MIN)]],
        constraint_log: Vec::new(),
        accel: vec![Span::point(x0.s_ddot)],
        jerk: vec![Span::point(x0.s_dddot)],
        d_dot: vec![Span::point(x0.d_dot)],
        grid,
    };
    for tau in k_cut..h {
        let i = tau - k_cut;
        let (a0, j0, dd0) = (rs.accel[i], rs.jerk[i], rs.d_dot[i]);
        let j1 = Span::new(j0.lo + ub.u_long.lo * dt, j0.hi + ub.u_long.hi * dt).intersect(&xb.s_dddot);
        let a1 = Span::new(
            a0.lo + j0.lo * dt + ub.u_long.lo * dt * dt / 2.0,
            a0.hi + j0.hi * dt + ub.u_long.hi * dt * dt / 2.0,
        )
        .intersect(&xb.s_ddot);
        let dd1 = Span::new(dd0.lo + ub.u_lat.lo * dt, dd0.hi + ub.u_lat.hi * dt).intersect(&xb.d_dot);
        if j1.is_empty() || a1.is_empty() || dd1.is_empty() {
            return Ok(ReachOutcome::Empty(tau + 1));
        }
        let dv = Span::new(
            dt * (2.0 * a0.lo + a1.lo) / 3.0 + j0.lo * dt * dt / 6.0,
            dt * (2.0 * a0.hi + a1.hi) / 3.0 + j0.hi * dt * dt / 6.0,
        );
        let ds = Span::new(
            dt * dt * (5.0 * a0.lo + a1.lo) / 12.0 + j0.lo * dt * dt * dt / 12.0,
            dt * dt * (5.0 * a0.hi + a1.hi) / 12.0 + j0.hi * dt * dt * dt / 12.0,
        );
        let dd = Span::new(dd0.lo * dt + ub.u_lat.lo * dt * dt / 2.0, dd0.hi * dt + ub.u_lat.hi * dt * dt / 2.0);

        // Forward images, re-gridded outward in (s, ṡ).
        let mut merged: BTreeMap<Key, (Cell, BTreeSet<usize>)> = BTreeMap::new();
        for (pi, c) in rs.steps[i].iter().enumerate() {
            let v = Span::new(c.sdot.lo + dv.lo, c.sdot.hi + dv.hi).intersect(&v_box);
            if v.is_empty() {
                continue;
            }
            let s = Span::new(c.s.lo + c.sdot.lo * dt + ds.lo, c.s.hi + c.sdot.hi * dt + ds.hi);
            let d = Span::new(c.d.lo + dd.lo, c.d.hi + dd.hi).intersect(&road);
            if d.is_empty() {
                continue;
            }
            let d = Span::new((d.lo / cfg.grid_d).floor() * cfg.grid_d, (d.hi / cfg.grid_d).ceil() * cfg.grid_d)
                .intersect(&road);
            let image = Cell::new(s, v, d);
            let (s0, s1) = grid_range(s, grid.0);
            let (v0, v1) = grid_range(v, grid.1);
            for ks in s0..=s1 {
                for kv in v0..=v1 {
                    let Some(piece) = grid_box((ks, kv), grid).intersect(&image) else { continue };
                    let e = merged.entry((ks, kv)).or_insert((piece, BTreeSet::new()));
                    e.0 = e.0.hull(&piece);
                    e.1.insert(pi);
                }
            }
        }

        // Clip against obstacles and the valuation's constraints.
        let t1 = tau + 1;
        let obstacles: Vec<(Span, Span)> = sc
            .obstacle_boxes(t1)
            .into_iter()
            .map(|(s, d)| (Span::new(s.lo - hl, s.hi + hl), Span::new(d.lo - hw, d.hi + hw)))
            .collect();
        let regions: Vec<(usize, Vec<Cell>, bool)> = if t1 >= tv {
            constraints
                .iter()
                .filter_map(|c| body_region(&c.body, sc, t1).map(|r| (c.prop, r, has_relaxation(&c.body, sc, t1))))
                .collect()
        } else {
            Vec::new()
        };
        for (prop, _, relaxed) in &regions {
            rs.constraint_log.push(ConstraintEntry { step: t1, source: format!("s{prop}"), relaxed: *relaxed });
        }
        let mut cells = Vec::new();
        let mut parents = Vec::new();
        let mut keys = Vec::new();
        for (key, (cell, ps)) in merged {
            let mut pieces = vec![cell];
            for (fs, fd) in &obstacles {
                pieces = pieces.iter().flat_map(|p| subtract(p, *fs, *fd)).collect();
            }
            for (_, r, _) in &regions {
                pieces = intersect_regions(&pieces, r);
            }
            let ps: Vec<usize> = ps.into_iter().collect();
            for p in pieces {
                cells.push(p);
                parents.push(ps.clone());
                keys.push(key);
            }
        }
        if cells.is_empty() {
            return Ok(ReachOutcome::Empty(t1));
        }
        rs.steps.push(cells);
        rs.parents.push(parents);
        rs.keys.push(keys);
        rs.accel.push(a1);
        rs.jerk.push(j1);
        rs.d_dot.push(dd1);
    }
    Ok(ReachOutcome::Reach(rs))
}

/// Per-step boxes, each inside the reachable set of its step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Corridor {
    pub k_cut: usize,
    pub boxes: Vec<Cell>,
}

impl Corridor {
    pub fn at(&self, tau: usize) -> &Cell {
        &self.boxes[tau - self.k_cut]
    }
}

/// Whether `b` lies inside the union of the step's cells, checked per grid key.
fn covered(rs: &ReachSet, i: usize, b: &Cell) -> bool {
    let (s0, s1) = grid_range(b.s, rs.grid.0);
    let (v0, v1) = grid_range(b.sdot, rs.grid.1);
    for ks in s0..=s1 {
        for kv in v0..=v1 {
            let Some(part) = grid_box((ks, kv), rs.grid).intersect(b) else { continue };
            if part.s.width() <= 0.0 && b.s.width() > 0.0 || part.sdot.width() <= 0.0 && b.sdot.width() > 0.0 {
                continue;
            }
            let ok = rs.keys[i]
                .iter()
                .zip(&rs.steps[i])
                .any(|(k, c)| *k == (ks, kv) && part.is_subset_of(c));
            if !ok {
                return false;
            }
        }
    }
    true
}

fn widen(rs: &ReachSet, i: usize, start: Cell) -> Cell {
    let (gs, gv) = rs.grid;
    let mut b = start;
    let step = |x: f64, g: f64, up: bool| -> f64 {
        let k = x / g;
        let next = if up { k.floor() + 1.0 } else { k.ceil() - 1.0 };
        next * g
    };
    for _ in 0..64 {
        let mut grew = false;
        for face in 0..4 {
            let mut c = b;
            match face {
                0 => c.s.hi = step(b.s.hi, gs, true),
                1 => c.s.lo = step(b.s.lo, gs, false),
                2 => c.sdot.hi = step(b.sdot.hi, gv, true),
                _ => c.sdot.lo = step(b.sdot.lo, gv, false),
            }
            // Shrink to what the cells actually cover along the grown face.
            let hull = rs.steps[i]
                .iter()
                .filter_map(|x| x.intersect(&c))
                .fold(None, |acc: Option<Cell>, x| Some(acc.map_or(x, |a| a.hull(&x))));
            let Some(hull) = hull else { continue };
            let cand = Cell { s: hull.s.hull(&b.s), sdot: hull.sdot.hull(&b.sdot), d: b.d };
            if cand != b && covered(rs, i, &cand) {
                b = cand;
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    b
}

/// Connected box sequence maximising the summed log-volume, widened inside
/// the reachable sets.
pub fn extract_corridor(rs: &ReachSet) -> Result<Corridor, ReachError> {
    let n = rs.steps.len();
    let mut score: Vec<Vec<f64>> = vec![vec![0.0]];
    let mut back: Vec<Vec<usize>> = vec![vec![0]];
    for i in 1..n {
        let mut sc_i = Vec::with_capacity(rs.steps[i].len());
        let mut bk_i = Vec::with_capacity(rs.steps[i].len());
        for (c, ps) in rs.steps[i].iter().zip(&rs.parents[i]) {
            let best = ps
                .iter()
                .filter(|p| score[i - 1][**p].is_finite())
                .max_by(|a, b| {
                    score[i - 1][**a]
                        .total_cmp(&score[i - 1][**b])
                        .then(rs.steps[i - 1][**a].s.hi.total_cmp(&rs.steps[i - 1][**b].s.hi))
                        .then(b.cmp(a))
                });
            match best {
                Some(p) => {
                    sc_i.push(score[i - 1][*p] + c.log_volume());
                    bk_i.push(*p);
                }
                None => {
                    sc_i.push(f64::NEG_INFINITY);
                    bk_i.push(usize::MAX);
                }
            }
        }
        score.push(sc_i);
        back.push(bk_i);
    }
    let last = &score[n - 1];
    let end = (0..last.len())
        .filter(|c| last[*c].is_finite())
        .max_by(|a, b| {
            last[*a].total_cmp(&last[*b]).then(rs.steps[n - 1][*a].s.hi.total_cmp(&rs.steps[n - 1][*b].s.hi)).then(b.cmp(a))
        })
        .ok_or(ReachError::NoConnectedCorridor)?;
    let mut path = vec![end];
    for i in (1..n).rev() {
        let p = back[i][*path.last().unwrap()];
        if p == usize::MAX {
            return Err(ReachError::NoConnectedCorridor);
        }
        path.push(p);
    }
    path.reverse();
    let boxes = path
        .iter()
        .enumerate()
        .map(|(i, c)| if i == 0 { rs.steps[0][*c] } else { widen(rs, i, rs.steps[i][*c]) })
        .collect();
    Ok(Corridor { k_cut: rs.k_cut, boxes })
}
