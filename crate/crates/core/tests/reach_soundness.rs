mod common;

use rulerepair::abstraction::abstract_rules;
use rulerepair::engine::{reach_snapshot, EngineConfig};
use rulerepair::scenarios::bundled;
use rulerepair::RuleLibrary;

#[test]
fn certified_rollouts_stay_inside() {
    let cfg = EngineConfig::default();
    let mut checked = 0;
    for sc in bundled() {
        let lib = RuleLibrary::bundled(sc.dt);
        let Some((report, rs)) = reach_snapshot(&sc, &lib, &[], &cfg).unwrap() else { continue };
        let ar = abstract_rules(&lib.select(&report.rules).unwrap()).unwrap();
        let rep = report.outcome.repaired().unwrap();
        let c = common::reach_soundness(&sc, &rs, &ar, &rep.valuation, &rep.trajectory, 1_000, 7);
        eprintln!("{}: {} certified of {} sampled", sc.name, c.accepted, c.attempts);
        assert!(c.escapes.is_empty(), "{:?}", &c.escapes[..c.escapes.len().min(5)]);
        assert!(c.accepted >= 1_000, "{}: only {} certified rollouts", sc.name, c.accepted);
        checked += 1;
    }
    assert_eq!(checked, 5);
}
