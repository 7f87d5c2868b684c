mod common;

use proptest::prelude::*;
use trslab::generators::{generate, GenSpec};
use trslab::model::{classify, CaseKind, Tolerances};
use trslab::solver::solve_default;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn every_family_round_trips_over_100_seeds() {
    let tol = Tolerances::default();
    for kind in CaseKind::ALL {
        for n in [2, 5] {
            for seed in 0..100 {
                let p = generate::<f64>(&GenSpec::new(n, kind, seed)).unwrap();
                let (s, t) = solve_default(&p.inst).unwrap();
                let label = classify(&p.inst, &s, &t, &tol).unwrap();
                let tag = format!("{kind} n={n} seed={seed}");
                assert_eq!(label, p.planted.case, "{tag}");
                assert_eq!(t.case, p.planted.case, "{tag}");
                assert!(close(t.f_star, p.planted.f_star, 1e-8), "{tag}: f* {} vs {}", t.f_star, p.planted.f_star);
                assert!(
                    close(t.lambda_star, p.planted.lambda_star, 1e-8),
                    "{tag}: λ* {} vs {}",
                    t.lambda_star,
                    p.planted.lambda_star
                );
            }
        }
    }
}

#[test]
fn generation_is_reproducible() {
    let spec = GenSpec::new(6, CaseKind::Hard2ii, 42);
    let a = generate::<f64>(&spec).unwrap();
    let b = generate::<f64>(&spec).unwrap();
    assert_eq!(a.inst, b.inst);
    assert_eq!(a.planted, b.planted);
}

proptest! {
    #[test]
    fn rotation_keeps_the_optimal_value(kind in common::case_kind(), n in 2usize..12, seed: u64) {
        let spec = GenSpec::new(n, kind, seed);
        let rot = generate::<f64>(&spec).unwrap();
        let plain = generate::<f64>(&GenSpec { rotate: false, ..spec }).unwrap();
        let (_, t_rot) = solve_default(&rot.inst).unwrap();
        let (_, t_plain) = solve_default(&plain.inst).unwrap();
        prop_assert!(close(t_rot.f_star, t_plain.f_star, 1e-9), "{} vs {}", t_rot.f_star, t_plain.f_star);
    }

    #[test]
    fn multiplicity_is_planted(n in 3usize..10, k in 1usize..3, seed: u64) {
        prop_assume!(k < n);
        let p = generate::<f64>(&GenSpec { mult_k: k, ..GenSpec::new(n, CaseKind::Hard2ii, seed) }).unwrap();
        let s = p.inst.decompose(trslab::linalg::DEFAULT_NULL_TOL).unwrap();
        prop_assert_eq!(s.k, k);
    }
}
