mod common;

use proptest::prelude::*;
use trslab::analysis::{
    directional_config, evaluate_cloud, fit_exponent, sample_cloud, shell_stats, FitConfig, FitTarget,
};
use trslab::generators::{generate, GenSpec};
use trslab::linalg::norm;
use trslab::model::CaseKind;
use trslab::solver::solve_default;

fn fit_rho(spec: &GenSpec, cloud_seed: u64) -> f64 {
    let p = generate::<f64>(spec).unwrap();
    let (s, t) = solve_default(&p.inst).unwrap();
    let cloud = sample_cloud(&p.inst, &s, &t, &directional_config(&t, cloud_seed)).unwrap();
    let evals = evaluate_cloud(&p.inst, &s, &t, &cloud);
    fit_exponent(&evals, FitTarget::ErrorBound, &FitConfig::default()).unwrap().exponent
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fits_ignore_rotation(kind in common::case_kind(), n in 2usize..8, seed in 0u64..10_000) {
        let spec = GenSpec::new(n, kind, seed);
        let rotated = fit_rho(&spec, seed);
        let plain = fit_rho(&GenSpec { rotate: false, ..spec }, seed);
        prop_assert!((rotated - plain).abs() <= 0.02, "{kind}: {rotated} vs {plain}");
    }

    #[test]
    fn clouds_are_honest_and_approach_the_optimum(kind in common::case_kind(), n in 2usize..8, seed in 0u64..10_000) {
        let p = common::planted(kind, n, seed);
        let (s, t) = solve_default(&p.inst).unwrap();
        let cfg = directional_config(&t, seed);
        let cloud = sample_cloud(&p.inst, &s, &t, &cfg).unwrap();
        prop_assert!(cloud.points.iter().all(|x| norm(x) <= 1.0 + 1e-12));
        prop_assert!(cloud.radii.windows(2).all(|w| w[1] < w[0]));
        prop_assert!(cloud.radii.iter().all(|&r| r >= 1e-7));

        let evals = evaluate_cloud(&p.inst, &s, &t, &cloud);
        prop_assert!(evals.iter().all(|e| e.gap.is_finite() && e.residual.is_finite() && e.dist.is_finite()));
        let fit = fit_exponent(&evals, FitTarget::ErrorBound, &FitConfig::default()).unwrap();
        prop_assert!(fit.n_points >= 30);
        prop_assert_eq!(fit.n_points + fit.excluded + fit.outside_window, evals.len());
        prop_assert!((0.0..=1.0).contains(&fit.r2));

        let stats = shell_stats(&evals);
        prop_assert!(stats.windows(2).all(|w| w[1].radius < w[0].radius));
        prop_assert!(
            stats.windows(2).all(|w| w[1].median_gap < w[0].median_gap),
            "gap ladder not monotone: {:?}",
            stats.iter().map(|s| s.median_gap).collect::<Vec<_>>()
        );
    }
}

#[test]
fn easy_and_ill_exponents_differ() {
    let rho = |kind| fit_rho(&GenSpec::new(4, kind, 11), 11);
    assert!((rho(CaseKind::Easy) - 0.5).abs() < 0.05);
    assert!((rho(CaseKind::Hard2i) - 0.25).abs() < 0.05);
}
