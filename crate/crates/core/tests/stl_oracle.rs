mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rulerepair::stl::{eval_bool, parse, time_to_violation, to_nnf, Formula, Interval, TableSignal, Tv};

use common::*;

#[test]
fn semantics_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut bad = Vec::new();
    for _ in 0..10_000 {
        let f = random_formula(&mut rng, 3);
        let len = rng.gen_range(1..=12);
        let s = random_signal(&mut rng, len);
        bad.extend(stl_mismatches(&f, &s));
    }
    assert!(bad.is_empty(), "{} disagreements, first: {}", bad.len(), bad[0]);
}

#[test]
fn robustness_sign_is_sound() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut n = 0;
    for _ in 0..10_000 {
        let f = random_formula(&mut rng, 4);
        let len = rng.gen_range(1..=12);
        n += sign_violations(&f, &random_signal(&mut rng, len));
    }
    assert_eq!(n, 0);
}

#[test]
fn nnf_preserves_meaning() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..2_000 {
        let f = random_formula(&mut rng, 4);
        let g = to_nnf(&f);
        assert!(g.is_nnf());
        let len = rng.gen_range(1..=12);
        let s = random_signal(&mut rng, len);
        for k in 0..len {
            assert_eq!(eval_bool(&f, &s, k), eval_bool(&g, &s, k), "{f} vs {g} at {k}");
        }
    }
}

#[test]
fn globally_tv_shrinks_with_window() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1_000 {
        let s = random_signal(&mut rng, 12);
        let mut last = Tv::Inf;
        for b in 0..12 {
            let tv = time_to_violation(&Formula::Globally(Box::new(Formula::pred("p")), Interval::new(0, b)), &s, 0);
            assert!(tv <= last);
            last = tv;
        }
    }
}

#[test]
fn parse_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let f = random_formula(&mut rng, 5);
        if contains_dual(&f) {
            continue;
        }
        let text = f.to_string();
        assert_eq!(parse(&text).unwrap(), f, "{text}");
    }
}

fn contains_dual(f: &Formula) -> bool {
    matches!(f, Formula::Release { .. } | Formula::Trigger { .. }) || f.children().into_iter().any(contains_dual)
}

#[test]
fn worked_examples() {
    let s = TableSignal::new(6).with_bool("p", vec![true, true, true, false, true, true]);
    assert_eq!(time_to_violation(&parse("G(p)").unwrap(), &s, 0), Tv::At(3));
    let s = TableSignal::new(8)
        .with_bool("a", vec![true, true, true, true, false, true, true, true])
        .with_bool("b", vec![false, true, true, false, false, true, true, true]);
    assert_eq!(time_to_violation(&parse("G[0,1](a | b)").unwrap(), &s, 3), Tv::At(4));
}
