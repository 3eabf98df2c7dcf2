//! The repair loop: monitor, abstract, propose a valuation, solve the theory
//! side (cut-off, reachability, QP), verify; ban failed valuations and retry.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{abstract_rules, AbstractionError, AbstractionResult};
use crate::criticality::{time_to_comply, trace_valuation, CriticalityError, ManeuverKind};
use crate::mpr::{proposition_robustness, MprSignal, SampleConfig};
use crate::predicates::{monitor_signal, Category, PredicateError, RuleError, RuleLibrary};
use crate::reach::{compute_reach, extract_corridor, ReachConfig, ReachError, ReachOutcome, ReachSet};
use crate::repair_opt::{build_qp, solve_repair, splice_and_verify, verify, QpWeights};
use crate::sat::{first_decision_flip, order_by_robustness, SatResult, Valuation};
use crate::stl::{conjoin_rules, time_to_violation, Formula, Tv};
use crate::world_model::{validate_scenario, Scenario, Trajectory, Violation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub max_iterations: usize,
    /// Wall-clock budget per repair call, milliseconds.
    pub budget_ms: u64,
    /// Rules to enforce; empty means the scenario's own list.
    pub rules: Vec<String>,
    pub sample: SampleConfig,
    pub reach: ReachConfig,
    pub weights: QpWeights,
    /// Fall back to the cut-off witness when the QP repair fails verification.
    pub witness_fallback: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_iterations: 16,
            budget_ms: 1000,
            rules: Vec::new(),
            sample: SampleConfig::default(),
            reach: ReachConfig::default(),
            weights: QpWeights::default(),
            witness_fallback: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("scenario is invalid: {}", .0.iter().map(|v| v.detail.as_str()).collect::<Vec<_>>().join("; "))]
    ScenarioInvalid(Vec<Violation>),
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error("no rules selected")]
    NoRules,
    #[error(transparent)]
    Predicate(#[from] PredicateError),
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasibleReason {
    Unsat,
    AllValuationsExhausted,
    EmptyReach,
    VerificationFailedEverywhere,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairSource {
    Qp,
    Witness,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Repaired {
    pub trajectory: Trajectory,
    pub k_cut: usize,
    pub valuation: Valuation,
    pub iterations: usize,
    pub source: RepairSource,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RepairOutcome {
    NoViolation,
    Repaired(Repaired),
    Infeasible { reason: InfeasibleReason, detail: String },
}

impl RepairOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            RepairOutcome::NoViolation => "no_violation",
            RepairOutcome::Repaired(_) => "repaired",
            RepairOutcome::Infeasible { .. } => "infeasible",
        }
    }

    pub fn repaired(&self) -> Option<&Repaired> {
        match self {
            RepairOutcome::Repaired(r) => Some(r),
            _ => None,
        }
    }

    pub fn is_success(&self) -> bool {
        !matches!(self, RepairOutcome::Infeasible { .. })
    }
}

/// Why an iteration's valuation was banned, or how it succeeded.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum IterationStatus {
    NoActionableProposition,
    NoManeuver,
    ProjectionUnavailable { proposition: usize },
    EmptyReach { step: usize },
    NoCorridor,
    VerificationFailed { detail: String },
    Error { detail: String },
    Repaired { source: RepairSource },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub valuation: String,
    pub tc: Option<usize>,
    pub per_maneuver_ttm: BTreeMap<ManeuverKind, Option<usize>>,
    pub reach_cells: usize,
    pub status: IterationStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub monitor_ms: f64,
    pub abstraction_ms: f64,
    pub robustness_ms: f64,
    pub sat_ms: f64,
    pub criticality_ms: f64,
    pub reach_ms: f64,
    pub qp_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepairReport {
    pub scenario: String,
    pub rules: Vec<String>,
    /// `None` when the plan never violates the rules.
    pub tv: Option<usize>,
    pub per_rule_tv: BTreeMap<String, Option<usize>>,
    pub robustness: Vec<(usize, f64)>,
    pub order: Vec<usize>,
    pub outcome: RepairOutcome,
    pub iterations: Vec<IterationRecord>,
    pub timings: Timings,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Time-to-violation of the rule conjunction on the planned trajectory.
pub fn monitor(sc: &Scenario, rules: &[(String, Formula)]) -> Result<(Tv, BTreeMap<String, Tv>), PredicateError> {
    let phi = conjoin_rules(rules);
    let sig = monitor_signal(&phi.predicate_ids(), sc, &sc.ego_trajectory)?;
    let per = rules.iter().map(|(n, f)| (n.clone(), time_to_violation(f, &sig, 0))).collect();
    Ok((time_to_violation(&phi, &sig, 0), per))
}

fn rule_names(sc: &Scenario, rules: &[String], cfg: &EngineConfig) -> Vec<String> {
    if !rules.is_empty() {
        rules.to_vec()
    } else if !cfg.rules.is_empty() {
        cfg.rules.clone()
    } else {
        sc.rules.clone()
    }
}

/// Repair against the bundled rule library.
pub fn repair(sc: &Scenario, rules: &[String], cfg: &EngineConfig) -> Result<RepairReport, EngineError> {
    repair_with(sc, &RuleLibrary::bundled(sc.dt), rules, cfg)
}

pub fn repair_with(sc: &Scenario, lib: &RuleLibrary, rules: &[String], cfg: &EngineConfig) -> Result<RepairReport, EngineError> {
    let start = Instant::now();
    let violations = validate_scenario(sc);
    if !violations.is_empty() {
        return Err(EngineError::ScenarioInvalid(violations));
    }
    let names = rule_names(sc, rules, cfg);
    if names.is_empty() {
        return Err(EngineError::NoRules);
    }
    let selected = lib.select(&names)?;
    let phi = conjoin_rules(&selected);
    let mut timings = Timings::default();

    let t = Instant::now();
    let (tv, per_rule) = monitor(sc, &selected)?;
    timings.monitor_ms = ms(t);
    let mut report = RepairReport {
        scenario: sc.name.clone(),
        rules: names,
        tv: tv.step(),
        per_rule_tv: per_rule.into_iter().map(|(n, v)| (n, v.step())).collect(),
        robustness: Vec::new(),
        order: Vec::new(),
        outcome: RepairOutcome::NoViolation,
        iterations: Vec::new(),
        timings,
    };
    let Tv::At(tv) = tv else {
        report.timings.total_ms = ms(start);
        return Ok(report);
    };

    let t = Instant::now();
    let ar = abstract_rules(&selected)?;
    report.timings.abstraction_ms = ms(t);

    let t = Instant::now();
    let mpr = MprSignal::new(sc, &sc.ego_trajectory, &cfg.sample);
    let rho: Vec<(usize, f64)> =
        ar.propositions.iter().map(|p| (p.index, proposition_robustness(p, &mpr, tv))).collect();
    let order = order_by_robustness(&rho);
    let sig = monitor_signal(&phi.predicate_ids(), sc, &sc.ego_trajectory)?;
    let trace = trace_valuation(&ar, &sig, tv);
    report.timings.robustness_ms = ms(t);
    report.robustness = rho;
    report.order = order.clone();

    let ctx = LoopContext { sc, cfg, ar: &ar, phi: &phi, tv, trace: &trace, order: &order, start };
    report.outcome = ctx.run(&mut report.iterations, &mut report.timings);
    report.timings.total_ms = ms(start);
    Ok(report)
}

struct LoopContext<'a> {
    sc: &'a Scenario,
    cfg: &'a EngineConfig,
    ar: &'a AbstractionResult,
    phi: &'a Formula,
    tv: usize,
    trace: &'a BTreeMap<usize, bool>,
    order: &'a [usize],
    start: Instant,
}

impl LoopContext<'_> {
    fn run(&self, records: &mut Vec<IterationRecord>, timings: &mut Timings) -> RepairOutcome {
        let mut banned: Vec<Valuation> = Vec::new();
        let mut out_of_time = false;
        for iteration in 1..=self.cfg.max_iterations.max(1) {
            if iteration > 1 && self.start.elapsed().as_millis() as u64 > self.cfg.budget_ms {
                out_of_time = true;
                break;
            }
            let t = Instant::now();
            let sat = first_decision_flip(self.ar, self.order, &banned, &|j| self.prefer(j));
            timings.sat_ms += ms(t);
            let SatResult::Sat(valuation) = sat else {
                return infeasible_after(records);
            };
            let mut rec = IterationRecord {
                iteration,
                valuation: valuation.to_string(),
                tc: None,
                per_maneuver_ttm: BTreeMap::new(),
                reach_cells: 0,
                status: IterationStatus::NoManeuver,
            };
            let result = self.theory(&valuation, &mut rec, timings);
            log::debug!("iteration {iteration}: {} -> {:?}", rec.valuation, rec.status);
            records.push(rec);
            match result {
                Some((trajectory, k_cut, source)) => {
                    return RepairOutcome::Repaired(Repaired { trajectory, k_cut, valuation, iterations: iteration, source });
                }
                None => banned.push(valuation),
            }
        }
        RepairOutcome::Infeasible {
            reason: InfeasibleReason::AllValuationsExhausted,
            detail: if out_of_time {
                format!("budget of {} ms spent after {} valuations", self.cfg.budget_ms, banned.len())
            } else {
                format!("{} valuations rejected", banned.len())
            },
        }
    }

    /// Decision polarity: `⊤`, except for propositions no maneuver can
    /// influence, which keep their value on the planned trace.
    fn prefer(&self, j: usize) -> bool {
        let p = self.ar.proposition(j);
        if p.predicate_categories.iter().all(|c| *c == Category::Uncategorized) {
            self.trace.get(&j).copied().unwrap_or(true)
        } else {
            true
        }
    }

    fn theory(
        &self,
        valuation: &Valuation,
        rec: &mut IterationRecord,
        timings: &mut Timings,
    ) -> Option<(Trajectory, usize, RepairSource)> {
        let sc = self.sc;
        let t = Instant::now();
        let cut = time_to_comply(sc, valuation, self.ar, self.trace, self.tv);
        timings.criticality_ms += ms(t);
        let cut = match cut {
            Ok(c) => c,
            Err(CriticalityError::NoActionableProposition) => {
                rec.status = IterationStatus::NoActionableProposition;
                return None;
            }
            Err(e) => {
                rec.status = IterationStatus::Error { detail: e.to_string() };
                return None;
            }
        };
        rec.tc = cut.tc;
        rec.per_maneuver_ttm = cut.per_maneuver_ttm.clone();
        let Some(k_cut) = cut.tc else {
            rec.status = IterationStatus::NoManeuver;
            return None;
        };

        let t = Instant::now();
        let reach = compute_reach(sc, k_cut, valuation, self.ar, self.tv, &self.cfg.reach);
        let corridor = match reach {
            Ok(ReachOutcome::Reach(rs)) => {
                rec.reach_cells = rs.cell_count();
                extract_corridor(&rs)
            }
            Ok(ReachOutcome::Empty(step)) => Err(ReachError::EmptyAt(step)),
            Err(e) => Err(e),
        };
        timings.reach_ms += ms(t);

        let t = Instant::now();
        let qp_result = match &corridor {
            Ok(c) => {
                let qp = build_qp(sc, c, k_cut, &self.cfg.weights, self.cfg.reach.corridor_margin);
                match solve_repair(sc, &qp) {
                    Ok(seg) => splice_and_verify(sc, &seg, k_cut, self.phi).map_err(|e| e.to_string()),
                    Err(e) => Err(e.to_string()),
                }
            }
            Err(e) => Err(e.to_string()),
        };
        timings.qp_ms += ms(t);
        if let Ok(traj) = qp_result {
            rec.status = IterationStatus::Repaired { source: RepairSource::Qp };
            return Some((traj, k_cut, RepairSource::Qp));
        }
        if self.cfg.witness_fallback {
            if let Some(w) = &cut.witness {
                if verify(sc, w, self.phi, k_cut).is_ok() {
                    rec.status = IterationStatus::Repaired { source: RepairSource::Witness };
                    return Some((w.clone(), k_cut, RepairSource::Witness));
                }
            }
        }
        rec.status = match (corridor, qp_result) {
            (Err(ReachError::EmptyAt(step)), _) => IterationStatus::EmptyReach { step },
            (Err(ReachError::ProjectionUnavailable(p)), _) => IterationStatus::ProjectionUnavailable { proposition: p },
            (Err(ReachError::NoConnectedCorridor), _) => IterationStatus::NoCorridor,
            (_, Err(detail)) => IterationStatus::VerificationFailed { detail },
            (Ok(_), Ok(_)) => unreachable!("successful repair returned above"),
        };
        None
    }
}

fn infeasible_after(records: &[IterationRecord]) -> RepairOutcome {
    let all = |f: fn(&IterationStatus) -> bool| !records.is_empty() && records.iter().all(|r| f(&r.status));
    let reason = if all(|s| matches!(s, IterationStatus::EmptyReach { .. })) {
        InfeasibleReason::EmptyReach
    } else if all(|s| matches!(s, IterationStatus::VerificationFailed { .. })) {
        InfeasibleReason::VerificationFailedEverywhere
    } else {
        InfeasibleReason::Unsat
    };
    RepairOutcome::Infeasible { reason, detail: format!("abstraction unsatisfiable after {} iterations", records.len()) }
}

/// Reachable set behind a successful repair, recomputed for inspection.
pub fn reach_snapshot(
    sc: &Scenario,
    lib: &RuleLibrary,
    rules: &[String],
    cfg: &EngineConfig,
) -> Result<Option<(RepairReport, ReachSet)>, EngineError> {
    let report = repair_with(sc, lib, rules, cfg)?;
    let (Some(tv), Some(rep)) = (report.tv, report.outcome.repaired()) else { return Ok(None) };
    let selected = lib.select(&report.rules)?;
    let ar = abstract_rules(&selected)?;
    match compute_reach(sc, rep.k_cut, &rep.valuation, &ar, tv, &cfg.reach) {
        Ok(ReachOutcome::Reach(rs)) => Ok(Some((report, rs))),
        _ => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchEntry {
    pub file: String,
    pub scenario: String,
    pub outcome: Option<String>,
    pub k_cut: Option<usize>,
    pub iterations: Option<usize>,
    pub runtime_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct BatchReport {
    pub entries: Vec<BatchEntry>,
    pub success_rate: f64,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub max_ms: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let i = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[i]
}

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("cannot read directory {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn run_one(path: &Path, rules: &[String], cfg: &EngineConfig) -> BatchEntry {
    let start = Instant::now();
    let mut entry = BatchEntry {
        file: path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        scenario: String::new(),
        outcome: None,
        k_cut: None,
        iterations: None,
        runtime_ms: 0.0,
        error: None,
    };
    let sc = std::fs::read_to_string(path)
        .map_err(|e| e.to_string())
        .and_then(|t| Scenario::from_json(&t).map_err(|e| e.to_string()));
    match sc {
        Ok(sc) => {
            entry.scenario = sc.name.clone();
            match repair(&sc, rules, cfg) {
                Ok(r) => {
                    entry.outcome = Some(r.outcome.label().to_string());
                    entry.iterations = Some(r.iterations.len());
                    entry.k_cut = r.outcome.repaired().map(|x| x.k_cut);
                    if let RepairOutcome::Infeasible { reason, .. } = &r.outcome {
                        entry.error = Some(format!("{reason:?}"));
                    }
                }
                Err(e) => entry.error = Some(e.to_string()),
            }
        }
        Err(e) => entry.error = Some(e),
    }
    entry.runtime_ms = ms(start);
    entry
}

/// Repair every `*.json` scenario in `dir` in parallel.
pub fn run_batch(dir: &Path, rules: &[String], cfg: &EngineConfig) -> Result<BatchReport, BatchError> {
    let io = |source| BatchError::Io { path: dir.to_path_buf(), source };
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let entries: Vec<BatchEntry> = files.par_iter().map(|p| run_one(p, rules, cfg)).collect();
    let mut times: Vec<f64> = entries.iter().map(|e| e.runtime_ms).collect();
    times.sort_by(f64::total_cmp);
    let ok = entries.iter().filter(|e| matches!(e.outcome.as_deref(), Some("repaired" | "no_violation"))).count();
    let n = entries.len();
    Ok(BatchReport {
        success_rate: if n == 0 { 0.0 } else { ok as f64 / n as f64 },
        mean_ms: if n == 0 { 0.0 } else { times.iter().sum::<f64>() / n as f64 },
        p50_ms: percentile(&times, 0.5),
        p90_ms: percentile(&times, 0.9),
        max_ms: times.last().copied().unwrap_or(0.0),
        entries,
    })
}
