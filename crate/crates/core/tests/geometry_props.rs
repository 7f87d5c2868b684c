mod common;

use proptest::prelude::*;
use rand::Rng;
use trslab::generators::rng_from_seed;
use trslab::geometry::{
    boundary_frame, dist_s0, dist_s1, h_expansion, h_value, kl_residual, nu, project_ball, project_s0, sin_gamma,
};
use trslab::linalg::{self, dist, norm};
use trslab::model::{f_value, CaseKind};
use trslab::solver::solve_default;

fn unit(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        if let Some(u) = linalg::normalized(&v) {
            return u;
        }
    }
}

fn hard2() -> impl Strategy<Value = CaseKind> {
    prop::sample::select(vec![CaseKind::Hard2i, CaseKind::Hard2ii])
}

proptest! {
    #[test]
    fn ball_projection_is_nearest(z in common::vector(6), y in common::vector(6), r in 0.0f64..=1.0) {
        let p = project_ball(&z);
        prop_assert!(norm(&p) <= 1.0 + 1e-15);
        let y = common::ball_point(&y, r);
        prop_assert!(dist(&z, &p) <= dist(&z, &y) + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn s0_projection_is_nearest(n in 2usize..5, k in 1usize..3, seed: u64, r in 0.0f64..=1.0) {
        prop_assume!(k < n);
        let p = common::planted_k(CaseKind::Hard2ii, n, k, seed);
        let (s, t) = solve_default(&p.inst).unwrap();
        let mut rng = rng_from_seed(seed ^ 1);
        let x = common::ball_point(&unit(&mut rng, n), r);
        let (proj, _) = project_s0(&t, &s, &x).unwrap();
        let d = dist_s0(&t, &s, &x);
        prop_assert!((norm(&proj) - 1.0).abs() <= 1e-12);
        let radius = match &t.solution_set {
            trslab::SolutionSet::SphereSlice { radius, .. } => *radius,
            _ => unreachable!(),
        };
        for _ in 0..10_000 {
            let u = common::ball_point(&unit(&mut rng, k), radius);
            let y = t.solution_set.point(&u);
            prop_assert!(d <= dist(&x, &y) + 1e-9);
        }
        prop_assert!((d - dist(&x, &proj)).abs() <= 1e-12);
    }

    #[test]
    fn distance_to_s1_controls_distance_to_s0(
        kind in prop::sample::select(vec![CaseKind::Easy, CaseKind::Hard1, CaseKind::Hard2i, CaseKind::Hard2ii]),
        n in 2usize..8,
        seed: u64,
    ) {
        let p = common::planted(kind, n, seed);
        let (s, t) = solve_default(&p.inst).unwrap();
        let sg = sin_gamma(&t).unwrap_or(1.0);
        let mut rng = rng_from_seed(seed ^ 2);
        for _ in 0..200 {
            let r: f64 = rng.random::<f64>().powf(0.25);
            let x = common::ball_point(&unit(&mut rng, n), r);
            let lhs = dist_s1(&t, &s, &x).unwrap() + (1.0 - linalg::norm_sq(&x)).max(0.0).sqrt();
            prop_assert!(lhs >= dist_s0(&t, &s, &x) * sg - 1e-9);
        }
    }

    #[test]
    fn residual_squared_is_four_h(kind in hard2(), n in 2usize..8, seed: u64, eps in 1e-3f64..0.3) {
        let p = common::planted(kind, n, seed);
        let (s, t) = solve_default(&p.inst).unwrap();
        let mut rng = rng_from_seed(seed ^ 3);
        let mut checked = 0;
        for _ in 0..50 {
            let mut x = t.x_star.clone();
            linalg::axpy(eps, &unit(&mut rng, n), &mut x);
            let x = linalg::normalized(&x).unwrap();
            if nu(&p.inst, &x).unwrap() <= 0.0 {
                continue;
            }
            let fr = boundary_frame(&t, &s, &x).unwrap();
            let h = h_value(&fr, &s);
            let res = kl_residual(&p.inst, &x);
            prop_assert!((res * res - 4.0 * h).abs() <= 1e-9 * h.max(1.0), "{} vs {}", res * res, 4.0 * h);
            checked += 1;
        }
        prop_assert!(checked > 0);
    }

    #[test]
    fn h_expansion_matches(kind in hard2(), n in 2usize..21, seed: u64) {
        let p = common::planted(kind, n, seed);
        let (s, t) = solve_default(&p.inst).unwrap();
        let mut rng = rng_from_seed(seed ^ 4);
        for _ in 0..20 {
            let x = unit(&mut rng, n);
            let fr = boundary_frame(&t, &s, &x).unwrap();
            prop_assert!((h_expansion(&fr, &s) - h_value(&fr, &s)).abs() <= 1e-10 * s.scale.powi(2));
        }
    }

    #[test]
    fn frame_beta_is_the_gap(kind in hard2(), n in 2usize..12, seed: u64) {
        let p = common::planted(kind, n, seed);
        let (s, t) = solve_default(&p.inst).unwrap();
        let mut rng = rng_from_seed(seed ^ 5);
        for _ in 0..20 {
            let x = unit(&mut rng, n);
            let fr = boundary_frame(&t, &s, &x).unwrap();
            prop_assert!((norm(&fr.s) - 1.0).abs() <= 1e-12);
            prop_assert!(fr.beta >= 0.0);
            prop_assert!((fr.beta - (f_value(&p.inst, &x) - t.f_star)).abs() <= 1e-10 * s.scale);
        }
    }
}
