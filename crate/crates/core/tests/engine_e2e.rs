mod common;

use rulerepair::engine::{repair, run_batch, EngineConfig, RepairOutcome};
use rulerepair::scenarios::{bundled, fuzzed};
use rulerepair::Scenario;

use common::*;

#[test]
fn bundled_repairs_are_sound() {
    let cfg = EngineConfig::default();
    for sc in bundled() {
        let r = repair(&sc, &[], &cfg).unwrap();
        check_repaired(&sc, &r).unwrap();
        assert!(!is_infeasible(&r.outcome), "{}: {:?}", sc.name, r.outcome);
    }
}

#[test]
fn expected_bundled_outcomes() {
    let cfg = EngineConfig::default();
    let label = |sc: &Scenario| repair(sc, &[], &cfg).unwrap().outcome.label().to_string();
    for sc in bundled() {
        let want = if sc.name.starts_with("compliant") || sc.name.ends_with("_compliant") { "no_violation" } else { "repaired" };
        assert_eq!(label(&sc), want, "{}", sc.name);
    }
}

#[test]
fn fuzzed_repairs_are_sound() {
    let cfg = EngineConfig::default();
    for sc in fuzzed_suite(20) {
        let r = repair(&sc, &[], &cfg).unwrap();
        check_repaired(&sc, &r).unwrap();
        if is_infeasible(&r.outcome) {
            let phi = rule_formula(&sc, &r.rules);
            assert!(known_witness(&sc, &phi).is_none(), "{} infeasible despite a witness", sc.name);
        }
    }
}

#[test]
fn repair_is_deterministic() {
    let cfg = EngineConfig::default();
    for sc in [bundled().remove(1), fuzzed(3)] {
        let a = repair(&sc, &[], &cfg).unwrap();
        let b = repair(&sc, &[], &cfg).unwrap();
        assert_eq!(a.outcome, b.outcome);
        assert_eq!(a.robustness, b.robustness);
        assert_eq!(a.iterations, b.iterations);
    }
}

#[test]
fn scenario_files_match_builders() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for sc in bundled() {
        let text = std::fs::read_to_string(dir.join(format!("{}.json", sc.name))).unwrap();
        assert_eq!(Scenario::from_json(&text).unwrap(), sc, "{}", sc.name);
    }
}

#[test]
fn empty_directory_batch() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_batch(dir.path(), &[], &EngineConfig::default()).unwrap();
    assert!(report.entries.is_empty());
    assert_eq!(report.success_rate, 0.0);
}

#[test]
fn batch_over_bundled_files() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let report = run_batch(&dir, &[], &EngineConfig::default()).unwrap();
    assert_eq!(report.entries.len(), 7);
    assert!(report.entries.iter().all(|e| e.error.is_none()));
    assert_eq!(report.success_rate, 1.0);
}

#[test]
fn report_serializes() {
    let r = repair(&bundled().remove(0), &[], &EngineConfig::default()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(v["outcome"]["outcome"], "repaired");
    assert!(matches!(r.outcome, RepairOutcome::Repaired(_)));
}
