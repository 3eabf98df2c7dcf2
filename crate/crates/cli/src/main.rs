use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rulerepair::abstraction::abstract_rules;
use rulerepair::engine::{reach_snapshot, repair_with, run_batch, EngineConfig, EngineError, RepairOutcome};
use rulerepair::predicates::{margin_signal, RuleLibrary, CATALOG};
use rulerepair::reach::ReachSet;
use rulerepair::stl::{conjoin_rules, robustness, time_to_violation, Tv};
use rulerepair::{Scenario, Trajectory};
use thiserror::Error;

#[derive(Parser)]
#[command(name = "rulerepair", version, about = "Repair planned trajectories that violate traffic rules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Repair one scenario and write the outcome as JSON.
    Repair(RepairArgs),
    /// Repair every scenario in a directory.
    Batch(BatchArgs),
    /// Print the time-to-violation and per-rule robustness.
    Monitor(MonitorArgs),
    /// Print the propositional abstraction of the selected rules.
    Abstract(AbstractArgs),
    /// List the predicate catalog.
    Predicates {
        #[arg(long)]
        list: bool,
    },
    /// Write the reachable set behind a repair as CSV.
    DumpReach(DumpReachArgs),
}

#[derive(Args)]
struct EngineArgs {
    /// Comma-separated rule names; defaults to the scenario's list.
    #[arg(long, value_delimiter = ',')]
    rules: Vec<String>,
    /// Engine configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rules file replacing the bundled library (TOML).
    #[arg(long)]
    rules_file: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    budget_ms: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotFormat {
    Csv,
    Svg,
}

#[derive(Args)]
struct RepairArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write velocity-profile plot data next to `--out`.
    #[arg(long, value_enum)]
    plot: Option<PlotFormat>,
    /// Print the CNF in DIMACS form to standard error.
    #[arg(long)]
    dump_cnf: bool,
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long)]
    dir: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MonitorArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_delimiter = ',')]
    rules: Vec<String>,
    #[arg(long)]
    rules_file: Option<PathBuf>,
}

#[derive(Args)]
struct AbstractArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    rules: Vec<String>,
    #[arg(long)]
    rules_file: Option<PathBuf>,
    /// Step size used to turn rule parameters into steps.
    #[arg(long, default_value_t = 0.2)]
    dt: f64,
    #[arg(long)]
    dump_cnf: bool,
}

#[derive(Args)]
struct DumpReachArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    plot: Option<PlotFormat>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Internal(String),
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::ScenarioInvalid(_) | EngineError::Rules(_) | EngineError::NoRules => CliError::Input(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write(p, text),
        None => {
            stdout(&format!("{text}\n"));
            Ok(())
        }
    }
}

/// Print to standard output, ignoring a closed pipe.
fn stdout(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::from_json(&read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_library(file: Option<&Path>, dt: f64) -> Result<RuleLibrary> {
    match file {
        Some(p) => RuleLibrary::from_toml(&read(p)?, dt).map_err(|e| CliError::Input(e.to_string())),
        None => Ok(RuleLibrary::bundled(dt)),
    }
}

fn engine_config(a: &EngineArgs) -> Result<EngineConfig> {
    let mut cfg = match &a.config {
        Some(p) => toml::from_str(&read(p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => EngineConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.sample.rng_seed = s;
    }
    if let Some(n) = a.max_iter {
        if n == 0 {
            return Err(CliError::Input("--max-iter must be at least 1".into()));
        }
        cfg.max_iterations = n;
    }
    if let Some(b) = a.budget_ms {
        cfg.budget_ms = b;
    }
    Ok(cfg)
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Internal(e.to_string()))
}

fn with_suffix(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(suffix);
    out.with_file_name(name)
}

fn velocity_csv(initial: &Trajectory, repaired: Option<&Trajectory>) -> String {
    let mut out = String::from("k,s,s_dot,s_ddot,d,rep_s,rep_s_dot,rep_s_ddot,rep_d\n");
    for (k, x) in initial.states.iter().enumerate() {
        let _ = write!(out, "{k},{},{},{},{}", x.s, x.s_dot, x.s_ddot, x.d);
        match repaired.and_then(|t| t.states.get(k)) {
            Some(r) => {
                let _ = writeln!(out, ",{},{},{},{}", r.s, r.s_dot, r.s_ddot, r.d);
            }
            None => out.push_str(",,,,\n"),
        }
    }
    out
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const PAD: f64 = 40.0;

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let fx = (x - self.x.0) / (self.x.1 - self.x.0).max(1e-9);
        let fy = (y - self.y.0) / (self.y.1 - self.y.0).max(1e-9);
        (Self::PAD + fx * (Self::W - 2.0 * Self::PAD), Self::H - Self::PAD - fy * (Self::H - 2.0 * Self::PAD))
    }

    fn open(&self, title: &str, xl: &str, yl: &str) -> String {
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <text x=\"{p}\" y=\"20\">{title}</text>\n",
            w = Self::W,
            h = Self::H,
            p = Self::PAD
        );
        let (x0, y0) = self.px(self.x.0, self.y.0);
        let (x1, y1) = self.px(self.x.1, self.y.1);
        let _ = writeln!(s, "<polyline points=\"{x0},{y1} {x0},{y0} {x1},{y0}\" fill=\"none\" stroke=\"black\"/>");
        let _ = writeln!(s, "<text x=\"{x1}\" y=\"{}\" text-anchor=\"end\">{xl} [{:.1}, {:.1}]</text>", y0 + 28.0, self.x.0, self.x.1);
        let _ = writeln!(s, "<text x=\"{x0}\" y=\"{}\">{yl} [{:.1}, {:.1}]</text>", y1 - 6.0, self.y.0, self.y.1);
        s
    }
}

fn velocity_svg(initial: &Trajectory, repaired: Option<&Trajectory>) -> String {
    let all = initial.states.iter().chain(repaired.into_iter().flat_map(|t| t.states.iter()));
    let vmax = all.map(|x| x.s_dot).fold(1.0, f64::max);
    let f = Frame { x: (0.0, initial.horizon().max(1) as f64), y: (0.0, vmax * 1.1) };
    let mut s = f.open("velocity profile", "k", "s_dot");
    for (traj, colour) in [(Some(initial), "grey"), (repaired, "crimson")] {
        let Some(t) = traj else { continue };
        let pts: Vec<String> = t
            .states
            .iter()
            .enumerate()
            .map(|(k, x)| {
                let (a, b) = f.px(k as f64, x.s_dot);
                format!("{a:.1},{b:.1}")
            })
            .collect();
        let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\"/>", pts.join(" "));
    }
    s.push_str("</svg>\n");
    s
}

/// Position-domain projection: one bar per cell over `(τ, s)`.
fn reach_svg(rs: &ReachSet) -> String {
    let cells = rs.steps.iter().flatten();
    let (lo, hi) = cells.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), c| (a.min(c.s.lo), b.max(c.s.hi)));
    let f = Frame { x: (rs.k_cut as f64, rs.last_step().max(rs.k_cut + 1) as f64 + 1.0), y: (lo, hi.max(lo + 1.0)) };
    let mut s = f.open("reachable positions", "step", "s");
    for (i, step) in rs.steps.iter().enumerate() {
        let tau = (rs.k_cut + i) as f64;
        for c in step {
            let (x0, y0) = f.px(tau, c.s.hi);
            let (x1, y1) = f.px(tau + 0.8, c.s.lo);
            let _ = writeln!(
                s,
                "<rect x=\"{x0:.1}\" y=\"{y0:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"steelblue\" fill-opacity=\"0.15\"/>",
                x1 - x0,
                (y1 - y0).max(0.5)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn cmd_repair(a: &RepairArgs) -> Result<ExitCode> {
    let sc = load_scenario(&a.scenario)?;
    let cfg = engine_config(&a.engine)?;
    let lib = load_library(a.engine.rules_file.as_deref(), sc.dt)?;
    if a.dump_cnf {
        let names = if a.engine.rules.is_empty() { sc.rules.clone() } else { a.engine.rules.clone() };
        let selected = lib.select(&names).map_err(|e| CliError::Input(e.to_string()))?;
        let ar = abstract_rules(&selected).map_err(|e| CliError::Input(e.to_string()))?;
        eprint!("{}", ar.to_dimacs());
    }
    let report = repair_with(&sc, &lib, &a.engine.rules, &cfg)?;
    emit(a.out.as_deref(), &json(&report)?)?;
    if let Some(fmt) = a.plot {
        let out = a.out.as_deref().ok_or_else(|| CliError::Input("--plot needs --out".into()))?;
        let rep = report.outcome.repaired().map(|r| &r.trajectory);
        match fmt {
            PlotFormat::Csv => write(&with_suffix(out, ".velocity.csv"), &velocity_csv(&sc.ego_trajectory, rep))?,
            PlotFormat::Svg => write(&with_suffix(out, ".velocity.svg"), &velocity_svg(&sc.ego_trajectory, rep))?,
        }
    }
    log::info!("{}: {} in {:.1} ms", sc.name, report.outcome.label(), report.timings.total_ms);
    Ok(match report.outcome {
        RepairOutcome::Infeasible { .. } => ExitCode::from(2),
        _ => ExitCode::SUCCESS,
    })
}

fn cmd_batch(a: &BatchArgs) -> Result<ExitCode> {
    let cfg = engine_config(&a.engine)?;
    if a.engine.rules_file.is_some() {
        return Err(CliError::Input("--rules-file is not supported by batch".into()));
    }
    let report = run_batch(&a.dir, &a.engine.rules, &cfg).map_err(|e| CliError::Input(e.to_string()))?;
    emit(a.out.as_deref(), &json(&report)?)?;
    Ok(ExitCode::SUCCESS)
}

fn fmt_tv(tv: Tv) -> String {
    match tv {
        Tv::Inf => "inf".into(),
        Tv::At(k) => k.to_string(),
    }
}

fn cmd_monitor(a: &MonitorArgs) -> Result<ExitCode> {
    let sc = load_scenario(&a.scenario)?;
    let lib = load_library(a.rules_file.as_deref(), sc.dt)?;
    let names = if a.rules.is_empty() { sc.rules.clone() } else { a.rules.clone() };
    if names.is_empty() {
        return Err(CliError::Input("no rules selected".into()));
    }
    let selected = lib.select(&names).map_err(|e| CliError::Input(e.to_string()))?;
    let phi = conjoin_rules(&selected);
    let sig = margin_signal(&phi.predicate_ids(), &sc, &sc.ego_trajectory).map_err(|e| CliError::Input(e.to_string()))?;
    let mut text = format!("TV = {}\n", fmt_tv(time_to_violation(&phi, &sig, 0)));
    for (name, f) in &selected {
        let _ = writeln!(text, "{name}: TV = {}, robustness = {}", fmt_tv(time_to_violation(f, &sig, 0)), robustness(f, &sig, 0));
    }
    stdout(&text);
    Ok(ExitCode::SUCCESS)
}

fn cmd_abstract(a: &AbstractArgs) -> Result<ExitCode> {
    if !(a.dt > 0.0) {
        return Err(CliError::Input("--dt must be positive".into()));
    }
    let lib = load_library(a.rules_file.as_deref(), a.dt)?;
    let selected = lib.select(&a.rules).map_err(|e| CliError::Input(e.to_string()))?;
    let ar = abstract_rules(&selected).map_err(|e| CliError::Input(e.to_string()))?;
    let mut text = format!("{}{}\n", ar.sigma_map(a.dt), ar.propositional_string());
    if a.dump_cnf {
        text.push_str(&ar.to_dimacs());
    }
    stdout(&text);
    Ok(ExitCode::SUCCESS)
}

fn cmd_predicates(list: bool) -> Result<ExitCode> {
    let mut text = String::new();
    for d in CATALOG {
        if list {
            let _ = writeln!(text, "{}", d.id);
        } else {
            let _ = writeln!(text, "{:<36} {:?} {:?} projectable={} {}", d.id, d.arity, d.category, d.projectable, d.description);
        }
    }
    stdout(&text);
    Ok(ExitCode::SUCCESS)
}

fn cmd_dump_reach(a: &DumpReachArgs) -> Result<ExitCode> {
    let sc = load_scenario(&a.scenario)?;
    let cfg = engine_config(&a.engine)?;
    let lib = load_library(a.engine.rules_file.as_deref(), sc.dt)?;
    let Some((_, rs)) = reach_snapshot(&sc, &lib, &a.engine.rules, &cfg)? else {
        eprintln!("no repaired trajectory, nothing to dump");
        return Ok(ExitCode::from(2));
    };
    emit(a.out.as_deref(), rs.to_csv().trim_end())?;
    if let Some(PlotFormat::Svg) = a.plot {
        let out = a.out.as_deref().ok_or_else(|| CliError::Input("--plot needs --out".into()))?;
        write(&with_suffix(out, ".svg"), &reach_svg(&rs))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("RULEREPAIR_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Repair(a) => cmd_repair(a),
        Command::Batch(a) => cmd_batch(a),
        Command::Monitor(a) => cmd_monitor(a),
        Command::Abstract(a) => cmd_abstract(a),
        Command::Predicates { list } => cmd_predicates(*list),
        Command::DumpReach(a) => cmd_dump_reach(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("rulerepair: {e}");
            ExitCode::from(match e {
                CliError::Input(_) => 3,
                CliError::Internal(_) => 4,
            })
        }
    }
}
