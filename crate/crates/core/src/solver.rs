//! Ground-truth solver: secular equation with explicit hard-case handling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, dot, norm, SpectralData};
use crate::model::{self, CaseKind, CaseLabel, ModelError, Tolerances, TrsInstance};
use crate::scalar::Scalar;

pub const MAX_SECULAR_ITER: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("secular solve did not converge in {iterations} iterations, bracket [{lo:e}, {hi:e}]")]
    NonConvergence { iterations: usize, lo: f64, hi: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Parametric description of the optimal set `S₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "params", rename_all = "snake_case")]
pub enum SolutionSet<T> {
    Singleton(Vec<T>),
    /// `{x̄ + N u : ‖u‖ = r}` with `x̄ ⟂ span N`.
    SphereSlice { anchor: Vec<T>, basis: Vec<Vec<T>>, radius: T },
    /// `{x̄ + N u : ‖u‖ ≤ r}`; only for the flat convex case with interior solutions.
    BallSlice { anchor: Vec<T>, basis: Vec<Vec<T>>, radius: T },
}

impl<T: Scalar> SolutionSet<T> {
    pub fn anchor(&self) -> &[T] {
        match self {
            SolutionSet::Singleton(x) => x,
            SolutionSet::SphereSlice { anchor, .. } | SolutionSet::BallSlice { anchor, .. } => anchor,
        }
    }

    /// Maps `u` to `x̄ + N u`. Panics for singletons.
    pub fn point(&self, u: &[T]) -> Vec<T> {
        match self {
            SolutionSet::Singleton(_) => panic!("singleton has no parametrization"),
            SolutionSet::SphereSlice { anchor, basis, .. } | SolutionSet::BallSlice { anchor, basis, .. } => {
                let mut x = anchor.clone();
                for (ui, v) in u.iter().zip(basis) {
                    linalg::axpy(*ui, v, &mut x);
                }
                x
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth<T> {
    pub f_star: T,
    pub lambda_star: T,
    pub x_star: Vec<T>,
    pub case: CaseLabel,
    pub solution_set: SolutionSet<T>,
    pub lambda1: T,
    /// `‖(A − λ₁I)†b‖` when λ₁ < 0, `‖A†b‖` otherwise.
    pub anchor_norm: T,
    /// Norm of the component of b in `Null(A − λ₁I)`.
    pub null_component: T,
}

/// Decomposes with the default null tolerance and solves.
pub fn solve_default<T: Scalar>(
    inst: &TrsInstance<T>,
) -> Result<(SpectralData<T>, GroundTruth<T>), SolverError> {
    let s = inst.decompose(T::lit(linalg::DEFAULT_NULL_TOL))?;
    let truth = solve(inst, &s, &Tolerances::default())?;
    Ok((s, truth))
}

pub fn solve<T: Scalar>(
    inst: &TrsInstance<T>,
    s: &SpectralData<T>,
    tol: &Tolerances<T>,
) -> Result<GroundTruth<T>, SolverError> {
    let one = T::one();
    let zero = T::zero();
    let n = inst.n();
    let k = s.k;
    let zt = s.zero_threshold();
    let l1 = s.lambda1;
    let c = s.to_eigen(inst.b());
    let null_component = norm(&c[..k]);
    let b_perp = null_component <= tol.perp * one.max(norm(inst.b()));
    let flat = model::lambda1_is_zero(s);

    // Range-space coefficients with the null block dropped.
    let mut c_range = c.clone();
    c_range[..k].iter_mut().for_each(|v| *v = zero);

    let build = |kind: CaseKind, lambda_star: T, x_star: Vec<T>, set: SolutionSet<T>, p: T| {
        GroundTruth {
            f_star: model::f_value(inst, &x_star),
            lambda_star,
            x_star,
            case: CaseLabel::of(kind),
            solution_set: set,
            lambda1: l1,
            anchor_norm: p,
            null_component,
        }
    };

    if l1 < -zt {
        let d = &s.d;
        let xbar_e: Vec<T> = (0..n).map(|i| if i < k { zero } else { c[i] / d[i] }).collect();
        let p = norm(&xbar_e);
        if !b_perp {
            let (delta, y) = secular(d, &c, tol.secular)?;
            let x = s.from_eigen(&y);
            return Ok(build(CaseKind::Easy, -l1 + delta, x.clone(), SolutionSet::Singleton(x), p));
        }
        if p > one + tol.norm {
            let (delta, y) = secular(d, &c_range, tol.secular)?;
            let x = s.from_eigen(&y);
            return Ok(build(CaseKind::Hard1, -l1 + delta, x.clone(), SolutionSet::Singleton(x), p));
        }
        let xbar = s.from_eigen(&xbar_e);
        if p >= one - tol.norm {
            let x = linalg::scale(one / p, &xbar);
            return Ok(build(CaseKind::Hard2i, -l1, x.clone(), SolutionSet::Singleton(x), p));
        }
        let r = (one - p * p).sqrt();
        let mut x = xbar.clone();
        linalg::axpy(r, &s.eigvec(0), &mut x);
        let set = SolutionSet::SphereSlice { anchor: xbar, basis: s.null_basis(), radius: r };
        return Ok(build(CaseKind::Hard2ii, -l1, x, set, p));
    }

    // λ₁ ≥ 0 (within tolerance): eigenvalues of the null block are exact zeros when flat.
    let e: Vec<T> = (0..n).map(|i| if flat && i < k { zero } else { s.eigvals[i] }).collect();
    let xt_e: Vec<T> = (0..n)
        .map(|i| if e[i].abs() <= zt { zero } else { c[i] / e[i] })
        .collect();
    let p = norm(&xt_e);

    let boundary = |coef: &[T]| -> Result<GroundTruth<T>, SolverError> {
        let (delta, y) = secular(&e, coef, tol.secular)?;
        let x = s.from_eigen(&y);
        Ok(build(CaseKind::ConvexBoundaryUnique, delta, x.clone(), SolutionSet::Singleton(x), p))
    };

    if flat && !b_perp {
        return boundary(&c);
    }
    let coef = if flat { &c_range } else { &c };
    if p > one + tol.norm || (!flat && p > one) {
        return boundary(coef);
    }
    let xt = s.from_eigen(&xt_e);
    if p < one - tol.norm || !flat {
        let set = if flat {
            let r = (one - p * p).sqrt();
            SolutionSet::BallSlice { anchor: xt.clone(), basis: s.null_basis(), radius: r }
        } else {
            SolutionSet::Singleton(xt.clone())
        };
        return Ok(build(CaseKind::ConvexInteriorMin, zero, xt, set, p));
    }
    let x = linalg::scale(one / p, &xt);
    Ok(build(CaseKind::ConvexBoundaryFlat, zero, x.clone(), SolutionSet::Singleton(x), p))
}

/// Finds `δ > 0` with `‖y(δ)‖ = 1`, `y_i = c_i / (e_i + δ)`, by safeguarded Newton
/// on `ψ(δ) = 1/‖y(δ)‖ − 1`. Requires `e ≥ 0` and `lim_{δ→0⁺} ‖y(δ)‖ > 1`.
fn secular<T: Scalar>(e: &[T], c: &[T], tol: T) -> Result<(T, Vec<T>), SolverError> {
    let one = T::one();
    let half = T::lit(0.5);
    let eval = |delta: T| -> (T, T) {
        let mut s2 = T::zero();
        let mut s3 = T::zero();
        for (&ei, &ci) in e.iter().zip(c) {
            if ci == T::zero() {
                continue;
            }
            let q = ci / (ei + delta);
            s2 += q * q;
            s3 += q * q / (ei + delta);
        }
        let nrm = s2.sqrt();
        (one / nrm - one, s3 / (nrm * nrm * nrm))
    };

    let hi0 = norm(c);
    let (mut lo, mut hi) = (T::zero(), hi0);
    let mut delta = hi;
    for _ in 0..MAX_SECULAR_ITER {
        let (psi, dpsi) = eval(delta);
        // |‖y‖ − 1| = |ψ| / (1 + ψ)
        if (psi / (one + psi)).abs() <= tol {
            // polish to working precision while Newton still improves |ψ|
            let (mut psi, mut dpsi) = (psi, dpsi);
            for _ in 0..4 {
                let cand = delta - psi / dpsi;
                if !(cand > T::zero() && cand.is_finite()) {
                    break;
                }
                let (p2, d2) = eval(cand);
                if p2.abs() >= psi.abs() {
                    break;
                }
                (delta, psi, dpsi) = (cand, p2, d2);
            }
            let y = e.iter().zip(c).map(|(&ei, &ci)| ci / (ei + delta)).collect();
            return Ok((delta, y));
        }
        if psi < T::zero() {
            lo = delta;
        } else {
            hi = delta;
        }
        if hi - lo <= T::epsilon() * hi0.max(one) {
            let y = e.iter().zip(c).map(|(&ei, &ci)| ci / (ei + delta)).collect();
            return Ok((delta, y));
        }
        let newton = delta - psi / dpsi;
        delta = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            (lo + hi) * half
        };
    }
    Err(SolverError::NonConvergence {
        iterations: MAX_SECULAR_ITER,
        lo: lo.to_f64_lossy(),
        hi: hi.to_f64_lossy(),
    })
}

/// Whether `x` lies in the solution set within `tol`.
pub fn membership<T: Scalar>(truth: &GroundTruth<T>, x: &[T], tol: T) -> bool {
    match &truth.solution_set {
        SolutionSet::Singleton(xs) => linalg::dist(x, xs) <= tol,
        SolutionSet::SphereSlice { anchor, basis, radius } | SolutionSet::BallSlice { anchor, basis, radius } => {
            let u: Vec<T> = basis.iter().map(|v| dot(v, x)).collect();
            let mut range = x.to_vec();
            for (ui, v) in u.iter().zip(basis) {
                linalg::axpy(-*ui, v, &mut range);
            }
            let un = norm(&u);
            let radial_ok = match truth.solution_set {
                SolutionSet::SphereSlice { .. } => (un - *radius).abs() <= tol,
                _ => un <= *radius + tol,
            };
            linalg::dist(&range, anchor) <= tol && radial_ok
        }
    }
}
