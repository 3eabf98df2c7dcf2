use std::path::PathBuf;
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"))
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rulerepair")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn stop_line_repair_succeeds() {
    let sc = scenario("stop_line");
    let o = run(&["repair", "--scenario", sc.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["outcome"]["outcome"], "repaired");
    assert!(report["outcome"]["k_cut"].as_u64().is_some());
}

#[test]
fn monitor_compliant_prints_inf() {
    let sc = scenario("compliant_follow");
    let o = run(&["monitor", "--scenario", sc.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("TV = inf"));
}

#[test]
fn monitor_violating_prints_step() {
    let sc = scenario("stop_line");
    let o = run(&["monitor", "--scenario", sc.to_str().unwrap()]);
    assert!(stdout(&o).starts_with("TV = 15"), "{}", stdout(&o));
}

#[test]
fn missing_file_is_input_error() {
    let o = run(&["repair", "--scenario", "/nonexistent/scenario.json"]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
}

#[test]
fn malformed_scenario_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{\"name\": 3}").unwrap();
    let o = run(&["repair", "--scenario", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unknown_rule_is_input_error() {
    let sc = scenario("stop_line");
    let o = run(&["repair", "--scenario", sc.to_str().unwrap(), "--rules", "NOPE"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn seeded_runs_are_identical() {
    let sc = scenario("multi_rule");
    let args = ["repair", "--scenario", sc.to_str().unwrap(), "--seed", "11"];
    let strip = |o: &Output| {
        let mut v: serde_json::Value = serde_json::from_str(&stdout(o)).unwrap();
        v.as_object_mut().unwrap().remove("timings");
        v
    };
    assert_eq!(strip(&run(&args)), strip(&run(&args)));
}

#[test]
fn plots_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let sc = scenario("priority");
    let o = run(&["repair", "--scenario", sc.to_str().unwrap(), "--out", out.to_str().unwrap(), "--plot", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("report.velocity.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);

    let reach = dir.path().join("reach.csv");
    let o = run(&["dump-reach", "--scenario", sc.to_str().unwrap(), "--out", reach.to_str().unwrap(), "--plot", "svg"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(std::fs::read_to_string(&reach).unwrap().starts_with("tau,s_lo"));
    assert!(std::fs::read_to_string(dir.path().join("reach.svg")).unwrap().contains("<svg"));
}

#[test]
fn abstract_dumps_cnf() {
    let o = run(&["abstract", "--rules", "IN1", "--dump-cnf"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().any(|l| l.starts_with("p cnf ")));
}

#[test]
fn batch_reports_success_rate() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let o = run(&["batch", "--dir", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["entries"].as_array().unwrap().len(), 7);
}

#[test]
fn predicates_list() {
    let o = run(&["predicates", "--list"]);
    assert_eq!(stdout(&o).lines().count(), 17);
}
