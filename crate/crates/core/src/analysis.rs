//! Empirical error-bound moduli, KL exponents and convergence-rate classes.
//!
//! Clouds of feasible points are sampled on shells around a reference optimum,
//! each point is evaluated for its value gap, distance to `S₀` and normal-cone
//! residual, and log-log least squares gives the exponents.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generators::{rng_from_seed, ProjectRng};
use crate::geometry::{self, BOUNDARY_BAND};
use crate::linalg::{self, dot, norm, SpectralData};
use crate::model::{CaseKind, TrsInstance};
use crate::pgm::IterateTrace;
use crate::scalar::Scalar;
use crate::solver::GroundTruth;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("gap range spans {decades:.2} decades, need at least {needed}")]
    InsufficientSpread { decades: f64, needed: f64 },
    #[error("only {got} points in the fit window, need at least {needed}")]
    InsufficientPoints { got: usize, needed: usize },
    #[error("invalid cloud configuration: {0}")]
    InvalidConfig(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloudMode {
    BallUniform,
    BoundaryShells,
    InteriorShells,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Uniformly random directions (tangent ones for boundary shells).
    Isotropic,
    /// Curves on the sphere leaving `x*` along `Null(A − λ₁I)`; needs `x* ∈ Range(A − λ₁I)`.
    NullSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CloudConfig {
    pub mode: CloudMode,
    pub direction: Direction,
    pub r_max: f64,
    pub r_min: f64,
    pub shells: usize,
    pub per_shell: usize,
    pub seed: u64,
}

impl Default for CloudConfig {
    fn default() -> Self {
        Self {
            mode: CloudMode::BoundaryShells,
            direction: Direction::Isotropic,
            r_max: 1e-1,
            r_min: 1e-5,
            shells: 20,
            per_shell: 50,
            seed: 0,
        }
    }
}

impl CloudConfig {
    /// Shell radii, geometric from `r_max` down to `r_min`.
    pub fn radii(&self) -> Vec<f64> {
        if self.shells == 1 {
            return vec![self.r_max];
        }
        let q = (self.r_min / self.r_max).ln() / (self.shells - 1) as f64;
        (0..self.shells).map(|j| self.r_max * (q * j as f64).exp()).collect()
    }

    fn validate(&self) -> Result<(), AnalysisError> {
        let bad = |m: &str| Err(AnalysisError::InvalidConfig(m.into()));
        if self.shells == 0 || self.per_shell == 0 {
            return bad("shells and per_shell must be positive");
        }
        if !(self.r_min >= 1e-7 && self.r_max > self.r_min && self.r_max <= 1.0) {
            return bad("radii must satisfy 1e-7 ≤ r_min < r_max ≤ 1");
        }
        Ok(())
    }
}

/// Cloud used for the exponent estimates: curved null-space shells for the ill
/// cases, interior shells for interior optima, tangent boundary shells otherwise.
pub fn directional_config<T: Scalar>(truth: &GroundTruth<T>, seed: u64) -> CloudConfig {
    let (mode, direction) = match truth.case.kind {
        CaseKind::Hard2i | CaseKind::ConvexBoundaryFlat => (CloudMode::BoundaryShells, Direction::NullSpace),
        CaseKind::ConvexInteriorMin => (CloudMode::InteriorShells, Direction::Isotropic),
        _ => (CloudMode::BoundaryShells, Direction::Isotropic),
    };
    CloudConfig { mode, direction, seed, ..CloudConfig::default() }
}

/// Same shells with isotropic directions.
pub fn isotropic_config<T: Scalar>(truth: &GroundTruth<T>, seed: u64) -> CloudConfig {
    let mode = if truth.case.kind == CaseKind::ConvexInteriorMin {
        CloudMode::InteriorShells
    } else {
        CloudMode::BoundaryShells
    };
    CloudConfig { mode, direction: Direction::Isotropic, seed, ..CloudConfig::default() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleCloud<T> {
    pub points: Vec<Vec<T>>,
    /// Shell index per point (0 for ball-uniform clouds).
    pub shell: Vec<usize>,
    pub radii: Vec<T>,
    pub mode: CloudMode,
    pub direction: Direction,
    /// Draws discarded because they left the ball or the construction failed.
    pub rejected: usize,
}

fn unit_vec<T: Scalar>(rng: &mut ProjectRng, n: usize) -> Vec<T> {
    loop {
        let g: Vec<T> = (0..n).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect();
        if let Some(u) = linalg::normalized(&g) {
            return u;
        }
    }
}

pub fn sample_cloud<T: Scalar>(
    inst: &TrsInstance<T>,
    s: &SpectralData<T>,
    truth: &GroundTruth<T>,
    cfg: &CloudConfig,
) -> Result<SampleCloud<T>, AnalysisError> {
    cfg.validate()?;
    let n = inst.n();
    let one = T::one();
    let mut rng = rng_from_seed(cfg.seed);
    let xs = &truth.x_star;
    let radii: Vec<T> = cfg.radii().into_iter().map(T::lit).collect();
    let mut points = Vec::new();
    let mut shell = Vec::new();
    let mut rejected = 0usize;
    let max_tries = 100 * cfg.per_shell;

    match (cfg.mode, cfg.direction) {
        (CloudMode::BallUniform, _) => {
            let total = cfg.shells * cfg.per_shell;
            let inv_n = 1.0 / n as f64;
            for _ in 0..total {
                let u: Vec<T> = unit_vec(&mut rng, n);
                let r = T::lit(rng.random::<f64>().powf(inv_n));
                points.push(linalg::scale(r, &u));
                shell.push(0);
            }
            return Ok(SampleCloud {
                points,
                shell,
                radii: Vec::new(),
                mode: cfg.mode,
                direction: cfg.direction,
                rejected,
            });
        }
        (CloudMode::BoundaryShells, Direction::Isotropic) => {
            if (norm(xs) - one).abs() > T::lit(BOUNDARY_BAND) {
                return Err(AnalysisError::NotApplicable("boundary shells need ‖x*‖ = 1".into()));
            }
            for (j, &r) in radii.iter().enumerate() {
                let theta = T::lit(2.0) * (r / T::lit(2.0)).asin();
                for _ in 0..cfg.per_shell {
                    let mut u: Vec<T> = unit_vec(&mut rng, n);
                    let c = dot(&u, xs);
                    linalg::axpy(-c, xs, &mut u);
                    let Some(u) = linalg::normalized(&u) else {
                        rejected += 1;
                        continue;
                    };
                    let mut x = linalg::scale(theta.cos(), xs);
                    linalg::axpy(theta.sin(), &u, &mut x);
                    points.push(linalg::normalized(&x).expect("nonzero"));
                    shell.push(j);
                }
            }
        }
        (CloudMode::BoundaryShells, Direction::NullSpace) => {
            if !truth.case.kind.is_ill() {
                return Err(AnalysisError::NotApplicable(format!(
                    "null-space curves need x* ∈ Range(A − λ₁I), got {}",
                    truth.case.kind
                )));
            }
            let g = linalg::pinv_apply(s, -s.lambda1, xs);
            let a = dot(xs, &g);
            let g2 = dot(&g, &g);
            let basis = s.null_basis();
            for (j, &eta) in radii.iter().enumerate() {
                let disc = a * a - g2 * eta * eta;
                if disc < T::zero() {
                    rejected += cfg.per_shell;
                    continue;
                }
                // ‖x* + t g + v‖ = 1 with ‖v‖ = η, v ⟂ x*, g
                let t = -eta * eta / (a + disc.sqrt());
                for _ in 0..cfg.per_shell {
                    let w: Vec<T> = unit_vec(&mut rng, basis.len());
                    let mut x = xs.clone();
                    linalg::axpy(t, &g, &mut x);
                    for (wi, v) in w.iter().zip(&basis) {
                        linalg::axpy(eta * *wi, v, &mut x);
                    }
                    points.push(linalg::normalized(&x).expect("nonzero"));
                    shell.push(j);
                }
            }
        }
        (CloudMode::InteriorShells, _) => {
            let lim = one - T::lit(1e-12);
            for (j, &r) in radii.iter().enumerate() {
                let mut got = 0;
                let mut tries = 0;
                while got < cfg.per_shell && tries < max_tries {
                    tries += 1;
                    let u: Vec<T> = unit_vec(&mut rng, n);
                    let mut x = xs.clone();
                    linalg::axpy(r, &u, &mut x);
                    if norm(&x) <= lim {
                        points.push(x);
                        shell.push(j);
                        got += 1;
                    } else {
                        rejected += 1;
                    }
                }
            }
        }
    }
    Ok(SampleCloud { points, shell, radii, mode: cfg.mode, direction: cfg.direction, rejected })
}

/// Value gap `f(x) − f*` computed from the optimality system: with `z = x − x*`,
/// `f(x) − f* = zᵀ(A + λ*I)z + λ*(‖x*‖² − ‖x‖²)`. On the sphere the last term
/// vanishes and is dropped, which keeps relative accuracy for tiny gaps.
/// Returns `+∞` outside the ball.
pub fn value_gap<T: Scalar>(inst: &TrsInstance<T>, truth: &GroundTruth<T>, x: &[T]) -> T {
    let dev = norm(x) - T::one();
    let band = T::lit(BOUNDARY_BAND);
    if dev > band {
        return T::infinity();
    }
    let xs = &truth.x_star;
    let lam = truth.lambda_star;
    let z = linalg::sub(x, xs);
    let mut w = inst.a().mul_vec(&z);
    linalg::axpy(lam, &z, &mut w);
    let q = dot(&z, &w);
    if dev >= -band || lam == T::zero() {
        q
    } else {
        q - lam * (T::lit(2.0) * dot(&z, xs) + dot(&z, &z))
    }
}

/// Normal-cone residual computed from the optimality system, matching
/// [`geometry::kl_residual`] with better relative accuracy near `x*`.
pub fn stable_residual<T: Scalar>(inst: &TrsInstance<T>, truth: &GroundTruth<T>, x: &[T]) -> T {
    let two = T::lit(2.0);
    let dev = norm(x) - T::one();
    let band = T::lit(BOUNDARY_BAND);
    if dev > band {
        return T::infinity();
    }
    let lam = truth.lambda_star;
    let z = linalg::sub(x, &truth.x_star);
    let mut w = inst.a().mul_vec(&z);
    linalg::axpy(lam, &z, &mut w);
    // ∇f(x) = 2(w − λ* x)
    if dev >= -band {
        let wx = dot(&w, x);
        if lam - wx > T::zero() {
            let mut r = w;
            linalg::axpy(-wx, x, &mut r);
            return two * norm(&r);
        }
    }
    let mut r = w;
    linalg::axpy(-lam, x, &mut r);
    two * norm(&r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEval {
    pub shell: usize,
    pub radius: f64,
    pub gap: f64,
    pub dist: f64,
    pub residual: f64,
}

pub fn evaluate_cloud<T: Scalar>(
    inst: &TrsInstance<T>,
    s: &SpectralData<T>,
    truth: &GroundTruth<T>,
    cloud: &SampleCloud<T>,
) -> Vec<PointEval> {
    cloud
        .points
        .iter()
        .zip(&cloud.shell)
        .map(|(x, &j)| PointEval {
            shell: j,
            radius: cloud.radii.get(j).map_or(f64::NAN, |r| r.to_f64_lossy()),
            gap: value_gap(inst, truth, x).to_f64_lossy(),
            dist: geometry::dist_s0(truth, s, x).to_f64_lossy(),
            residual: stable_residual(inst, truth, x).to_f64_lossy(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub gap_lo: f64,
    pub gap_hi: f64,
    pub min_points: usize,
    pub min_decades: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { gap_lo: 1e-10, gap_hi: 1e-2, min_points: 30, min_decades: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitTarget {
    /// `dist(x, S₀) ≤ τ gap^ρ`
    ErrorBound,
    /// `gap^ϱ ≤ τ · residual`
    Kl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub target: FitTarget,
    /// Least-squares slope of `log y` on `log gap`.
    pub exponent: f64,
    /// Smallest τ making the one-sided inequality hold at the fitted exponent
    /// on every fitted point.
    pub tau_fit: f64,
    /// τ of the regression line itself.
    pub tau_center: f64,
    pub r2: f64,
    pub n_points: usize,
    /// Points dropped for a non-positive gap or a degenerate distance/residual.
    pub excluded: usize,
    /// Points outside the gap window.
    pub outside_window: usize,
    pub radius_range: (f64, f64),
    pub gap_range: (f64, f64),
    /// Slope through the per-shell 90th-percentile envelope.
    pub quantile_exponent: Option<f64>,
}

struct Ols {
    slope: f64,
    intercept: f64,
    r2: f64,
}

fn ols(xs: &[f64], ys: &[f64]) -> Ols {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 && sxx > 0.0 { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) } else { 1.0 };
    Ols { slope, intercept: my - slope * mx, r2 }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn target_value(p: &PointEval, target: FitTarget) -> f64 {
    match target {
        FitTarget::ErrorBound => p.dist,
        FitTarget::Kl => p.residual,
    }
}

/// Fits `log y ~ log gap` over the points whose gap lies in the window.
pub fn fit_exponent(evals: &[PointEval], target: FitTarget, cfg: &FitConfig) -> Result<ExponentFit, AnalysisError> {
    let mut excluded = 0;
    let mut outside = 0;
    let mut pts: Vec<&PointEval> = Vec::new();
    for p in evals {
        let y = target_value(p, target);
        if !(p.gap > 0.0 && p.gap.is_finite() && y > 0.0 && y.is_finite()) {
            excluded += 1;
        } else if p.gap < cfg.gap_lo || p.gap > cfg.gap_hi {
            outside += 1;
        } else {
            pts.push(p);
        }
    }
    if pts.len() < cfg.min_points {
        return Err(AnalysisError::InsufficientPoints { got: pts.len(), needed: cfg.min_points });
    }
    let gmin = pts.iter().map(|p| p.gap).fold(f64::INFINITY, f64::min);
    let gmax = pts.iter().map(|p| p.gap).fold(0.0, f64::max);
    let decades = (gmax / gmin).log10();
    if decades < cfg.min_decades {
        return Err(AnalysisError::InsufficientSpread { decades, needed: cfg.min_decades });
    }
    let lx: Vec<f64> = pts.iter().map(|p| p.gap.ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| target_value(p, target).ln()).collect();
    let fit = ols(&lx, &ly);
    let e = fit.slope;
    let tau_fit = pts
        .iter()
        .map(|p| match target {
            FitTarget::ErrorBound => p.dist / p.gap.powf(e),
            FitTarget::Kl => p.gap.powf(e) / p.residual,
        })
        .fold(0.0, f64::max);
    let tau_center = match target {
        FitTarget::ErrorBound => fit.intercept.exp(),
        FitTarget::Kl => (-fit.intercept).exp(),
    };

    // Per-shell envelope: upper 90% of log dist, or lower 10% of log residual.
    let mut shells: Vec<usize> = pts.iter().map(|p| p.shell).collect();
    shells.sort_unstable();
    shells.dedup();
    let (mut qx, mut qy) = (Vec::new(), Vec::new());
    for j in shells {
        let mut gx: Vec<f64> = pts.iter().filter(|p| p.shell == j).map(|p| p.gap.ln()).collect();
        let mut gy: Vec<f64> =
            pts.iter().filter(|p| p.shell == j).map(|p| target_value(p, target).ln()).collect();
        if gx.len() < 5 {
            continue;
        }
        gx.sort_by(f64::total_cmp);
        gy.sort_by(f64::total_cmp);
        qx.push(quantile(&gx, 0.5));
        qy.push(quantile(&gy, if target == FitTarget::ErrorBound { 0.9 } else { 0.1 }));
    }
    let quantile_exponent = (qx.len() >= 3).then(|| ols(&qx, &qy).slope);

    let rmin = pts.iter().map(|p| p.radius).fold(f64::INFINITY, f64::min);
    let rmax = pts.iter().map(|p| p.radius).fold(0.0, f64::max);
    Ok(ExponentFit {
        target,
        exponent: e,
        tau_fit,
        tau_center,
        r2: fit.r2,
        n_points: pts.len(),
        excluded,
        outside_window: outside,
        radius_range: (rmin, rmax),
        gap_range: (gmin, gmax),
        quantile_exponent,
    })
}

/// Hölder error-bound modulus `ρ̂` over a cloud.
pub fn fit_eb_modulus<T: Scalar>(
    inst: &TrsInstance<T>,
    s: &SpectralData<T>,
    truth: &GroundTruth<T>,
    cloud: &SampleCloud<T>,
    cfg: &FitConfig,
) -> Result<ExponentFit, AnalysisError> {
    fit_exponent(&evaluate_cloud(inst, s, truth, cloud), FitTarget::ErrorBound, cfg)
}

/// KL exponent `ϱ̂` over a cloud.
pub fn fit_kl_exponent<T: Scalar>(
    inst: &TrsInstance<T>,
    s: &SpectralData<T>,
    truth: &GroundTruth<T>,
    cloud: &SampleCloud<T>,
    cfg: &FitConfig,
) -> Result<ExponentFit, AnalysisError> {
    fit_exponent(&evaluate_cloud(inst, s, truth, cloud), FitTarget::Kl, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandFit {
    pub r_max: f64,
    pub r_min: f64,
    pub eb_exponent: Option<f64>,
    pub kl_exponent: Option<f64>,
}

/// Refits over `bands` contiguous groups of shells, outermost first, to expose
/// any dependence of the exponents on the sampling radius.
pub fn fit_by_radius_band(evals: &[PointEval], bands: usize, cfg: &FitConfig) -> Vec<BandFit> {
    let Some(max_shell) = evals.iter().map(|p| p.shell).max() else {
        return Vec::new();
    };
    let shells = max_shell + 1;
    let bands = bands.clamp(1, shells);
    (0..bands)
        .map(|b| {
            let (lo, hi) = (b * shells / bands, (b + 1) * shells / bands);
            let sel: Vec<PointEval> = evals.iter().filter(|p| (lo..hi).contains(&p.shell)).copied().collect();
            let radii = sel.iter().map(|p| p.radius);
            BandFit {
                r_max: radii.clone().fold(f64::NEG_INFINITY, f64::max),
                r_min: radii.fold(f64::INFINITY, f64::min),
                eb_exponent: fit_exponent(&sel, FitTarget::ErrorBound, cfg).ok().map(|f| f.exponent),
                kl_exponent: fit_exponent(&sel, FitTarget::Kl, cfg).ok().map(|f| f.exponent),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellStat {
    pub shell: usize,
    pub radius: f64,
    pub n: usize,
    pub median_gap: f64,
    pub median_dist: f64,
    pub median_residual: f64,
}

pub fn shell_stats(evals: &[PointEval]) -> Vec<ShellStat> {
    let mut shells: Vec<usize> = evals.iter().map(|p| p.shell).collect();
    shells.sort_unstable();
    shells.dedup();
    shells
        .into_iter()
        .map(|j| {
            let sel: Vec<&PointEval> = evals.iter().filter(|p| p.shell == j).collect();
            let med = |f: &dyn Fn(&PointEval) -> f64| {
                let mut v: Vec<f64> = sel.iter().map(|p| f(p)).collect();
                v.sort_by(f64::total_cmp);
                quantile(&v, 0.5)
            };
            ShellStat {
                shell: j,
                radius: sel[0].radius,
                n: sel.len(),
                median_gap: med(&|p| p.gap),
                median_dist: med(&|p| p.dist),
                median_residual: med(&|p| p.residual),
            }
        })
        .collect()
}

pub const UNIVERSAL_EB_EXPONENT: f64 = 0.25;
pub const UNIVERSAL_KL_EXPONENT: f64 = 0.75;
/// Sample points this close to `S₀` count as optimal in [`check_universal_bounds`].
pub const OPTIMAL_DIST: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniversalCheck {
    pub checked: usize,
    pub eb_violations: usize,
    pub kl_violations: usize,
    /// Largest `dist / (κ τ_EB gap^{1/4})`; at most 1 when the bound holds.
    pub worst_eb_ratio: f64,
    /// Largest `gap^{3/4} / (κ τ_KL residual)`.
    pub worst_kl_ratio: f64,
}

/// Checks the modulus-1/4 error bound and the exponent-3/4 KL inequality at
/// every point, with the fitted constants inflated by `inflation`.
pub fn check_universal_bounds(evals: &[PointEval], tau_eb: f64, tau_kl: f64, inflation: f64) -> UniversalCheck {
    let mut out = UniversalCheck { checked: 0, eb_violations: 0, kl_violations: 0, worst_eb_ratio: 0.0, worst_kl_ratio: 0.0 };
    for p in evals {
        if !p.gap.is_finite() {
            continue;
        }
        out.checked += 1;
        let g = p.gap.max(0.0);
        let eb = p.dist / (inflation * tau_eb * g.powf(UNIVERSAL_EB_EXPONENT));
        let kl = g.powf(UNIVERSAL_KL_EXPONENT) / (inflation * tau_kl * p.residual);
        // points within rounding of S₀ are optimal; both sides vanish there
        let at_opt = p.dist <= OPTIMAL_DIST;
        let eb = if at_opt { 0.0 } else { eb };
        let kl = if at_opt || g == 0.0 { 0.0 } else { kl };
        if eb > 1.0 || eb.is_nan() {
            out.eb_violations += 1;
        }
        if kl > 1.0 || kl.is_nan() {
            out.kl_violations += 1;
        }
        out.worst_eb_ratio = out.worst_eb_ratio.max(eb);
        out.worst_kl_ratio = out.worst_kl_ratio.max(kl);
    }
    out
}

// ---------------------------------------------------------------------------
// Rates

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum RateClass {
    Linear { ratio: f64 },
    Sublinear { power: f64 },
    Undetermined { reason: String },
}

impl RateClass {
    pub fn name(&self) -> &'static str {
        match self {
            RateClass::Linear { .. } => "linear",
            RateClass::Sublinear { .. } => "sublinear",
            RateClass::Undetermined { .. } => "undetermined",
        }
    }

    pub fn param(&self) -> Option<f64> {
        match self {
            RateClass::Linear { ratio } => Some(*ratio),
            RateClass::Sublinear { power } => Some(*power),
            RateClass::Undetermined { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateConfig {
    pub min_points: usize,
    /// Required r² advantage of the chosen model.
    pub margin: f64,
    /// Gaps at most `floor · max(1, |f*|)` count as the floating-point floor.
    pub floor: f64,
    /// The window starts no earlier than this fraction of its end index.
    pub tail_fraction: f64,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self { min_points: 5, margin: 0.02, floor: 1e-13, tail_fraction: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub class: RateClass,
    pub r2_linear: f64,
    pub r2_power: f64,
    pub n_points: usize,
    pub window: (usize, usize),
}

pub fn classify_rate<T: Scalar>(trace: &IterateTrace<T>, cfg: &RateConfig) -> RateFit {
    let undetermined = |reason: &str, window| RateFit {
        class: RateClass::Undetermined { reason: reason.into() },
        r2_linear: f64::NAN,
        r2_power: f64::NAN,
        n_points: 0,
        window,
    };
    let Some(n_loc) = trace.n_loc else {
        return undetermined("iterates never entered the local regime", (0, 0));
    };
    let floor = cfg.floor * 1f64.max(trace.f_star.to_f64_lossy().abs());
    let recs = &trace.records;
    let end = recs[n_loc..]
        .iter()
        .position(|r| r.gap.to_f64_lossy() <= floor)
        .map_or(recs.len(), |p| n_loc + p);
    let start = n_loc.max((cfg.tail_fraction * end as f64).ceil() as usize).max(1);
    if end <= start || end - start < cfg.min_points {
        return undetermined("gaps reach the floating-point floor before the fit window fills", (start, end));
    }
    let ks: Vec<f64> = (start..end).map(|k| k as f64).collect();
    let lk: Vec<f64> = ks.iter().map(|k| k.ln()).collect();
    let lg: Vec<f64> = recs[start..end].iter().map(|r| r.gap.to_f64_lossy().ln()).collect();
    let lin = ols(&ks, &lg);
    let pow = ols(&lk, &lg);
    let class = if lin.r2 >= pow.r2 + cfg.margin {
        RateClass::Linear { ratio: lin.slope.exp() }
    } else if pow.r2 >= lin.r2 + cfg.margin {
        RateClass::Sublinear { power: pow.slope }
    } else {
        RateClass::Undetermined { reason: "r² of both models within the margin".into() }
    };
    RateFit { class, r2_linear: lin.r2, r2_power: pow.r2, n_points: end - start, window: (start, end) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBoundReport {
    pub checked: usize,
    pub violations: usize,
    /// Smallest `(bound − r_k) / bound`; negative when violated.
    pub worst_margin: f64,
}

/// Sublinear bound `r_N / (1 + (k − N)√r_N / (M²(2 + 3√r_N/(2M²))))²`,
/// algebraically equal to the reciprocal-square form.
pub fn sublinear_bound(k_minus_n: f64, r_n: f64, m: f64) -> f64 {
    let m2 = m * m;
    let sr = r_n.sqrt();
    let denom = k_minus_n / (m2 * (2.0 + 1.5 / m2 * sr)) + 1.0 / sr;
    1.0 / (denom * denom)
}

/// Checks the sublinear bound pointwise for `k > N_loc`.
pub fn verify_rate_bound<T: Scalar>(trace: &IterateTrace<T>, m_fit: f64) -> RateBoundReport {
    let mut rep = RateBoundReport { checked: 0, violations: 0, worst_margin: f64::INFINITY };
    let Some(n) = trace.n_loc else {
        return rep;
    };
    let r_n = trace.records[n].gap.to_f64_lossy();
    if !(r_n > 0.0) {
        return rep;
    }
    // the bound equals r_N at k = N
    for r in &trace.records[n + 1..] {
        let bound = sublinear_bound((r.k - n) as f64, r_n, m_fit);
        let gap = r.gap.to_f64_lossy();
        let margin = (bound - gap) / bound;
        rep.checked += 1;
        if margin < -1e-9 {
            rep.violations += 1;
        }
        rep.worst_margin = rep.worst_margin.min(margin);
    }
    rep
}

/// `Π_B(x* + radius·u)` for a seeded random unit `u`.
pub fn perturbed_start<T: Scalar>(truth: &GroundTruth<T>, radius: T, seed: u64) -> Vec<T> {
    let mut rng = rng_from_seed(seed);
    let u: Vec<T> = unit_vec(&mut rng, truth.x_star.len());
    let mut x = truth.x_star.clone();
    linalg::axpy(radius, &u, &mut x);
    geometry::project_ball(&x)
}

/// Start point for rate experiments. Ill cases start on the null-space curve
/// through `x*` at displacement `radius` (shrunk if the curve ends earlier), so
/// the slow degenerate direction is excited; other cases use [`perturbed_start`].
pub fn rate_start<T: Scalar>(s: &SpectralData<T>, truth: &GroundTruth<T>, radius: T, seed: u64) -> Vec<T> {
    if !truth.case.kind.is_ill() {
        return perturbed_start(truth, radius, seed);
    }
    let mut rng = rng_from_seed(seed);
    let xs = &truth.x_star;
    let g = linalg::pinv_apply(s, -s.lambda1, xs);
    let a = dot(xs, &g);
    let gn = norm(&g);
    let eta = if gn * radius > a { T::lit(0.9) * a / gn } else { radius };
    let t = -eta * eta / (a + (a * a - gn * gn * eta * eta).max(T::zero()).sqrt());
    let basis = s.null_basis();
    let w: Vec<T> = unit_vec(&mut rng, basis.len());
    let mut x = xs.clone();
    linalg::axpy(t, &g, &mut x);
    for (wi, v) in w.iter().zip(&basis) {
        linalg::axpy(eta * *wi, v, &mut x);
    }
    geometry::project_ball(&x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::kl_residual;
    use crate::model::f_value;
    use crate::pgm::{self, PgmConfig, StepMode, X0Policy};
    use crate::solver::solve_default;

    fn inst(a: [f64; 4], b: [f64; 2]) -> TrsInstance<f64> {
        TrsInstance::from_rows(2, a.to_vec(), b.to_vec()).unwrap()
    }

    fn fits(p: &TrsInstance<f64>, cfg: Option<CloudConfig>) -> (ExponentFit, ExponentFit) {
        let (s, t) = solve_default(p).unwrap();
        let cfg = cfg.unwrap_or_else(|| directional_config(&t, 5));
        let cloud = sample_cloud(p, &s, &t, &cfg).unwrap();
        let ev = evaluate_cloud(p, &s, &t, &cloud);
        (
            fit_exponent(&ev, FitTarget::ErrorBound, &FitConfig::default()).unwrap(),
            fit_exponent(&ev, FitTarget::Kl, &FitConfig::default()).unwrap(),
        )
    }

    #[test]
    fn easy_exponents() {
        let (eb, kl) = fits(&inst([-1.0, 0.0, 0.0, 1.0], [1.0, 0.0]), None);
        assert!((0.42..=0.58).contains(&eb.exponent), "{eb:?}");
        assert!((0.42..=0.58).contains(&kl.exponent), "{kl:?}");
    }

    #[test]
    fn ill_exponents() {
        for p in [inst([-1.0, 0.0, 0.0, 1.0], [0.0, 2.0]), inst([0.0, 0.0, 0.0, 1.0], [0.0, 1.0])] {
            let (eb, kl) = fits(&p, None);
            assert!((0.17..=0.33).contains(&eb.exponent), "{eb:?}");
            assert!((0.65..=0.85).contains(&kl.exponent), "{kl:?}");
        }
    }

    #[test]
    fn hard2ii_kl_exponent() {
        let (_, kl) = fits(&inst([-1.0, 0.0, 0.0, 1.0], [0.0, 0.5]), None);
        assert!((0.42..=0.58).contains(&kl.exponent), "{kl:?}");
    }

    #[test]
    fn null_space_curves_need_ill_case() {
        let p = inst([-1.0, 0.0, 0.0, 1.0], [1.0, 0.0]);
        let (s, t) = solve_default(&p).unwrap();
        let cfg = CloudConfig { direction: Direction::NullSpace, ..CloudConfig::default() };
        assert!(matches!(sample_cloud(&p, &s, &t, &cfg), Err(AnalysisError::NotApplicable(_))));
    }

    #[test]
    fn stable_evaluators_match_direct_ones() {
        for b in [[1.0, 0.0], [0.0, 2.0], [0.0, 0.5], [0.3, 0.1]] {
            let p = inst([-1.0, 0.0, 0.0, 1.0], b);
            let (s, t) = solve_default(&p).unwrap();
            let cloud = sample_cloud(&p, &s, &t, &CloudConfig { mode: CloudMode::BallUniform, ..CloudConfig::default() })
                .unwrap();
            for x in cloud.points.iter().take(200) {
                let direct = f_value(&p, x) - t.f_star;
                assert!((value_gap(&p, &t, x) - direct).abs() <= 1e-12, "{x:?}");
                assert!((stable_residual(&p, &t, x) - kl_residual(&p, x)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn spread_is_required() {
        let ev: Vec<PointEval> = (0..40)
            .map(|i| PointEval { shell: 0, radius: 0.1, gap: 1e-3 * (1.0 + i as f64 / 40.0), dist: 0.1, residual: 0.1 })
            .collect();
        assert!(matches!(
            fit_exponent(&ev, FitTarget::ErrorBound, &FitConfig::default()),
            Err(AnalysisError::InsufficientSpread { .. })
        ));
        assert!(matches!(
            fit_exponent(&ev[..10], FitTarget::ErrorBound, &FitConfig::default()),
            Err(AnalysisError::InsufficientPoints { got: 10, .. })
        ));
    }

    fn trace(b: [f64; 2], x0: Vec<f64>, step: f64) -> (IterateTrace<f64>, GroundTruth<f64>) {
        let p = inst([-1.0, 0.0, 0.0, 1.0], b);
        let (s, t) = solve_default(&p).unwrap();
        let cfg = PgmConfig {
            step_mode: StepMode::Constant { t: step },
            x0_policy: X0Policy::Given(x0),
            ..PgmConfig::default()
        };
        (pgm::run(&p, &s, &t, &cfg).unwrap(), t)
    }

    #[test]
    fn rate_classes() {
        let (tr, _) = trace([1.0, 0.0], vec![0.5, 0.5], 0.05);
        match classify_rate(&tr, &RateConfig::default()).class {
            RateClass::Linear { ratio } => assert!(ratio < 1.0),
            other => panic!("{other:?}"),
        }
        let (tr, _) = trace([0.0, 2.0], vec![0.6, 0.8], 0.45);
        match classify_rate(&tr, &RateConfig::default()).class {
            RateClass::Sublinear { power } => assert!((-2.6..=-1.6).contains(&power), "{power}"),
            other => panic!("{other:?}"),
        }
        let (tr, t) = trace([1.0, 0.0], vec![1.0, 0.0], 0.45);
        assert_eq!(tr.records[0].x, t.x_star);
        assert!(matches!(classify_rate(&tr, &RateConfig::default()).class, RateClass::Undetermined { .. }));
    }

    #[test]
    fn rate_bound_vacuous_at_last_index() {
        let (mut tr, _) = trace([0.0, 2.0], vec![0.6, 0.8], 0.45);
        tr.n_loc = Some(tr.records.len() - 1);
        let rep = verify_rate_bound(&tr, 1.0);
        assert_eq!((rep.checked, rep.violations), (0, 0));
    }

    #[test]
    fn rate_bound_with_fitted_constant() {
        let p = inst([-1.0, 0.0, 0.0, 1.0], [0.0, 2.0]);
        let (s, t) = solve_default(&p).unwrap();
        let cloud = sample_cloud(&p, &s, &t, &directional_config(&t, 1)).unwrap();
        let kl = fit_kl_exponent(&p, &s, &t, &cloud, &FitConfig::default()).unwrap();
        let step = 0.9 / s.norm2();
        let (tr, _) = trace([0.0, 2.0], vec![0.6, 0.8], step);
        let m = pgm::rate_constant(kl.tau_fit, s.norm2(), step);
        let rep = verify_rate_bound(&tr, m);
        assert!(rep.checked > 1000);
        assert_eq!(rep.violations, 0, "{rep:?}");
        // the bound has slack beyond 2x in M; a tenfold undersized M breaks it
        assert!(verify_rate_bound(&tr, m / 10.0).violations > 0);
    }

    #[test]
    fn sublinear_bound_at_origin() {
        assert!((sublinear_bound(0.0, 1e-4, 3.0) - 1e-4).abs() < 1e-18);
        assert!(sublinear_bound(10.0, 1e-4, 3.0) < sublinear_bound(5.0, 1e-4, 3.0));
    }
}
