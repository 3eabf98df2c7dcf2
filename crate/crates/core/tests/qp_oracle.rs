use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rulerepair::engine::{reach_snapshot, EngineConfig};
use rulerepair::reach::{extract_corridor, Cell, Corridor};
use rulerepair::repair_opt::{build_qp, solve_qp, QpProblem, QpWeights};
use rulerepair::scenarios::bundled;
use rulerepair::world_model::Span;
use rulerepair::RuleLibrary;

/// Dense `P = MᵀM + εI`, random `q`, random box.
fn random_box_qp<R: Rng>(rng: &mut R) -> (QpProblem, Vec<Vec<f64>>, Vec<Span>) {
    let n = rng.gen_range(1..=8);
    let m: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut p = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            p[i][j] = (0..n).map(|k| m[k][i] * m[k][j]).sum::<f64>() + if i == j { 0.1 } else { 0.0 };
        }
    }
    let mut qp = QpProblem::new(n);
    for i in 0..n {
        for j in i..n {
            qp.p.insert((i, j), p[i][j]);
        }
        qp.q[i] = rng.gen_range(-3.0..3.0);
    }
    let boxes: Vec<Span> = (0..n)
        .map(|_| {
            let lo = rng.gen_range(-2.0..1.0);
            Span::new(lo, lo + rng.gen_range(0.1..3.0))
        })
        .collect();
    for (i, b) in boxes.iter().enumerate() {
        qp.add_bounds(i, *b);
    }
    (qp, p, boxes)
}

/// Projected gradient descent with step `1/L`.
fn projected_gradient(p: &[Vec<f64>], q: &[f64], boxes: &[Span]) -> Vec<f64> {
    let n = q.len();
    let l: f64 = p.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let mut z: Vec<f64> = boxes.iter().map(|b| 0.5 * (b.lo + b.hi)).collect();
    for _ in 0..20_000 {
        let g: Vec<f64> = (0..n).map(|i| (0..n).map(|j| p[i][j] * z[j]).sum::<f64>() + q[i]).collect();
        for i in 0..n {
            z[i] = boxes[i].clamp(z[i] - g[i] / l);
        }
    }
    z
}

#[test]
fn box_qps_match_projected_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..300 {
        let (qp, p, boxes) = random_box_qp(&mut rng);
        let sol = solve_qp(&qp).unwrap();
        let z = projected_gradient(&p, &qp.q, &boxes);
        let oracle = qp.objective(&z);
        assert!(qp.max_violation(&sol.z) <= 1e-6);
        assert!((sol.objective - oracle).abs() <= 1e-6 * (1.0 + oracle.abs()), "{} vs {}", sol.objective, oracle);
        for (a, b) in sol.z.iter().zip(&z) {
            assert!((a - b).abs() < 1e-4, "{:?} vs {:?}", sol.z, z);
        }
    }
}

fn shrink(s: Span, f: f64) -> Span {
    let c = 0.5 * (s.lo + s.hi);
    if !s.lo.is_finite() || !s.hi.is_finite() {
        return s;
    }
    Span::new(s.lo + f * (c - s.lo), s.hi - f * (s.hi - c))
}

#[test]
fn nested_corridors_cost_more() {
    let cfg = EngineConfig::default();
    let w = QpWeights::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut compared = 0;
    for sc in bundled() {
        let lib = RuleLibrary::bundled(sc.dt);
        let Some((_, rs)) = reach_snapshot(&sc, &lib, &[], &cfg).unwrap() else { continue };
        let outer = extract_corridor(&rs).unwrap();
        let base = build_qp(&sc, &outer, rs.k_cut, &w, 1e-3);
        let Ok(c0) = solve_qp(&base.longitudinal) else { continue };
        let d0 = solve_qp(&base.lateral).unwrap();
        for _ in 0..10 {
            let f = rng.gen_range(0.0..0.6);
            let inner = Corridor {
                k_cut: outer.k_cut,
                boxes: outer.boxes.iter().map(|b| Cell::new(shrink(b.s, f), shrink(b.sdot, f), shrink(b.d, f))).collect(),
            };
            let qp = build_qp(&sc, &inner, rs.k_cut, &w, 1e-3);
            if let Ok(c1) = solve_qp(&qp.longitudinal) {
                assert!(c1.objective >= c0.objective - 1e-6, "{}: {} < {}", sc.name, c1.objective, c0.objective);
                compared += 1;
            }
            if let Ok(d1) = solve_qp(&qp.lateral) {
                assert!(d1.objective >= d0.objective - 1e-6);
            }
        }
    }
    assert!(compared > 0);
}
