use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rulerepair::abstraction::abstract_rules;
use rulerepair::engine::{monitor, reach_snapshot};
use rulerepair::reach::{compute_reach, extract_corridor};
use rulerepair::repair_opt::{build_qp, solve_repair};
use rulerepair::sat::solve;
use rulerepair::scenarios::{bundled, multi_rule, stop_line};
use rulerepair::{repair, EngineConfig, RuleLibrary};

fn pipeline(c: &mut Criterion) {
    let sc = multi_rule();
    let lib = RuleLibrary::bundled(sc.dt);
    let all: Vec<String> = lib.names().iter().map(|s| s.to_string()).collect();
    let rules = lib.select(&all).unwrap();
    let cfg = EngineConfig::default();

    c.bench_function("monitor_all_rules", |b| b.iter(|| monitor(black_box(&sc), &rules).unwrap()));
    c.bench_function("abstract_all_rules", |b| b.iter(|| abstract_rules(black_box(&rules)).unwrap()));

    let ar = abstract_rules(&rules).unwrap();
    let order: Vec<usize> = (1..=ar.num_props()).collect();
    c.bench_function("dpll_all_rules", |b| b.iter(|| solve(black_box(&ar), &order)));

    let sl = stop_line();
    let sl_lib = RuleLibrary::bundled(sl.dt);
    let (report, rs) = reach_snapshot(&sl, &sl_lib, &[], &cfg).unwrap().unwrap();
    let rep = report.outcome.repaired().unwrap();
    let sl_ar = abstract_rules(&sl_lib.select(&report.rules).unwrap()).unwrap();
    let tv = report.tv.unwrap();
    c.bench_function("reach_stop_line", |b| {
        b.iter(|| compute_reach(&sl, rep.k_cut, &rep.valuation, &sl_ar, tv, &cfg.reach).unwrap())
    });

    let corridor = extract_corridor(&rs).unwrap();
    let qp = build_qp(&sl, &corridor, rep.k_cut, &cfg.weights, cfg.reach.corridor_margin);
    c.bench_function("qp_stop_line", |b| b.iter(|| solve_repair(&sl, black_box(&qp)).unwrap()));

    let mut g = c.benchmark_group("repair");
    g.sample_size(10);
    for s in bundled() {
        g.bench_function(s.name.as_str(), |b| b.iter(|| repair(black_box(&s), &[], &cfg).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
