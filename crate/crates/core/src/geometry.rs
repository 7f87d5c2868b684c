//! Projections onto the ball and the solution sets, distances, normal-cone
//! residuals and the boundary quantities α, β, H.

use thiserror::Error;

use crate::linalg::{self, dot, norm, SpectralData};
use crate::model::{self, CaseKind, TrsInstance};
use crate::scalar::Scalar;
use crate::solver::{GroundTruth, SolutionSet};

/// Points with `|‖x‖ − 1|` at most this are treated as boundary points.
pub const BOUNDARY_BAND: f64 = 1e-10;

/// Null components at most this long count as zero in `project_s0`.
pub const EQUIDISTANT_CUT: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("operation not defined for this case: {0}")]
    NotApplicable(String),
    #[error("point is not on the unit sphere: ‖x‖ − 1 = {0:e}")]
    NotOnBoundary(f64),
}

fn on_boundary<T: Scalar>(x: &[T]) -> Result<(), GeometryError> {
    let dev = norm(x) - T::one();
    if dev.abs() <= T::lit(BOUNDARY_BAND) {
        Ok(())
    } else {
        Err(GeometryError::NotOnBoundary(dev.to_f64_lossy()))
    }
}

/// Euclidean projection onto the unit ball.
pub fn project_ball<T: Scalar>(z: &[T]) -> Vec<T> {
    let nz = norm(z);
    if nz > T::one() {
        z.iter().map(|&v| v / nz).collect()
    } else {
        z.to_vec()
    }
}

/// `anchor + N clip(Nᵀx, r)` together with the clipped coordinates.
fn slice_clip<T: Scalar>(anchor: &[T], basis: &[Vec<T>], radius: T, x: &[T]) -> (Vec<T>, Vec<T>) {
    let mut u: Vec<T> = basis.iter().map(|v| dot(v, x)).collect();
    let un = norm(&u);
    if un > radius {
        let c = radius / un;
        u.iter_mut().for_each(|ui| *ui = *ui * c);
    }
    let mut p = anchor.to_vec();
    for (ui, v) in u.iter().zip(basis) {
        linalg::axpy(*ui, v, &mut p);
    }
    (p, u)
}

/// Projection onto the solution set `S₁` of the convex relaxation.
pub fn project_s1<T: Scalar>(
    truth: &GroundTruth<T>,
    _s: &SpectralData<T>,
    x: &[T],
) -> Result<Vec<T>, GeometryError> {
    if truth.case.kind.is_convex() {
        return Err(GeometryError::NotApplicable(format!(
            "S₁ is defined for λ₁ < 0, got {}",
            truth.case.kind
        )));
    }
    match &truth.solution_set {
        SolutionSet::Singleton(xs) => Ok(xs.clone()),
        SolutionSet::SphereSlice { anchor, basis, radius } => Ok(slice_clip(anchor, basis, *radius, x).0),
        SolutionSet::BallSlice { .. } => unreachable!("ball slices only occur in convex cases"),
    }
}

pub fn dist_s1<T: Scalar>(truth: &GroundTruth<T>, s: &SpectralData<T>, x: &[T]) -> Result<T, GeometryError> {
    Ok(linalg::dist(x, &project_s1(truth, s, x)?))
}

/// Projection onto `S₀`. The flag is set when every point of `S₀` is
/// equidistant from `x`; the returned point is then the canonical witness
/// `x̄ + r·N_first`.
pub fn project_s0<T: Scalar>(
    truth: &GroundTruth<T>,
    _s: &SpectralData<T>,
    x: &[T],
) -> Result<(Vec<T>, bool), GeometryError> {
    match &truth.solution_set {
        SolutionSet::Singleton(xs) => Ok((xs.clone(), false)),
        SolutionSet::BallSlice { anchor, basis, radius } => Ok((slice_clip(anchor, basis, *radius, x).0, false)),
        SolutionSet::SphereSlice { anchor, basis, radius } => {
            let u: Vec<T> = basis.iter().map(|v| dot(v, x)).collect();
            let un = norm(&u);
            let mut p = anchor.clone();
            if un <= T::lit(EQUIDISTANT_CUT) {
                linalg::axpy(*radius, &basis[0], &mut p);
                return Ok((p, true));
            }
            for (ui, v) in u.iter().zip(basis) {
                linalg::axpy(*radius * *ui / un, v, &mut p);
            }
            Ok((p, false))
        }
    }
}

/// `dist(x, S₀)`.
pub fn dist_s0<T: Scalar>(truth: &GroundTruth<T>, s: &SpectralData<T>, x: &[T]) -> T {
    let (p, whole) = project_s0(truth, s, x).expect("project_s0 is total");
    if whole {
        let (anchor, radius) = match &truth.solution_set {
            SolutionSet::SphereSlice { anchor, radius, .. } => (anchor, *radius),
            _ => unreachable!(),
        };
        let dx = linalg::sub(x, anchor);
        (dot(&dx, &dx) + radius * radius).sqrt()
    } else {
        linalg::dist(x, &p)
    }
}

/// `ν(x) = max(⟨−∇f(x), x⟩, 0)` for `‖x‖ = 1`.
pub fn nu<T: Scalar>(inst: &TrsInstance<T>, x: &[T]) -> Result<T, GeometryError> {
    on_boundary(x)?;
    Ok(nu_unchecked(inst, x))
}

fn nu_unchecked<T: Scalar>(inst: &TrsInstance<T>, x: &[T]) -> T {
    let g = model::grad_f(inst, x);
    (-dot(&g, x)).max(T::zero())
}

/// `dist(−∇f(x), N_B(x))`; `+∞` outside the ball.
pub fn kl_residual<T: Scalar>(inst: &TrsInstance<T>, x: &[T]) -> T {
    let dev = norm(x) - T::one();
    let band = T::lit(BOUNDARY_BAND);
    let g = model::grad_f(inst, x);
    if dev < -band {
        norm(&g)
    } else if dev <= band {
        let v = nu_unchecked(inst, x);
        let mut r = g;
        linalg::axpy(v, x, &mut r);
        norm(&r)
    } else {
        T::infinity()
    }
}

/// Boundary quantities in the eigenbasis, relative to the reference optimum `x*`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFrame<T> {
    /// `Pᵀx*`
    pub s: Vec<T>,
    /// `Pᵀ(x − x*)`
    pub z: Vec<T>,
    /// `⟨s, Dz⟩`
    pub alpha: T,
    /// `⟨z, Dz⟩`
    pub beta: T,
    /// `‖z‖²`
    pub gamma_sq: T,
}

/// Builds the frame for a boundary point `x` of a hard-case-2 instance.
pub fn boundary_frame<T: Scalar>(
    truth: &GroundTruth<T>,
    s: &SpectralData<T>,
    x: &[T],
) -> Result<BoundaryFrame<T>, GeometryError> {
    if !matches!(truth.case.kind, CaseKind::Hard2i | CaseKind::Hard2ii) {
        return Err(GeometryError::NotApplicable(format!(
            "boundary frames need hard case 2 (λ* = −λ₁), got {}",
            truth.case.kind
        )));
    }
    on_boundary(x)?;
    Ok(frame_unchecked(s, &truth.x_star, x))
}

pub(crate) fn frame_unchecked<T: Scalar>(s: &SpectralData<T>, x_star: &[T], x: &[T]) -> BoundaryFrame<T> {
    let sv = s.to_eigen(x_star);
    let z = s.to_eigen(&linalg::sub(x, x_star));
    let mut alpha = T::zero();
    let mut beta = T::zero();
    for ((&si, &zi), &di) in sv.iter().zip(&z).zip(&s.d) {
        alpha += si * di * zi;
        beta += zi * di * zi;
    }
    let gamma_sq = dot(&z, &z);
    BoundaryFrame { s: sv, z, alpha, beta, gamma_sq }
}

/// `H = ‖Dz‖² − (α + β)²`
pub fn h_value<T: Scalar>(frame: &BoundaryFrame<T>, s: &SpectralData<T>) -> T {
    let dz2 = frame.z.iter().zip(&s.d).fold(T::zero(), |acc, (&zi, &di)| acc + (di * zi) * (di * zi));
    let ab = frame.alpha + frame.beta;
    dz2 - ab * ab
}

/// Sum-of-squares expansion of `H`.
pub fn h_expansion<T: Scalar>(frame: &BoundaryFrame<T>, s: &SpectralData<T>) -> T {
    let k = s.k;
    let n = s.n();
    let w: Vec<T> = frame.z.iter().zip(&s.d).map(|(&zi, &di)| di * zi).collect();
    let s_null: T = frame.s[..k].iter().map(|&v| v * v).sum();
    let w_range: T = w[k..].iter().map(|&v| v * v).sum();
    let mut cross = T::zero();
    for i in k..n {
        for j in (i + 1)..n {
            let t = w[i] * frame.s[j] - w[j] * frame.s[i];
            cross += t * t;
        }
    }
    let (a, b) = (frame.alpha, frame.beta);
    s_null * w_range + cross - T::lit(2.0) * a * b - b * b
}

/// `sin γ = (1 − ‖x̄‖) / √((1 − ‖x̄‖)² + 1 − ‖x̄‖²)` for hard case 2 (ii).
pub fn sin_gamma<T: Scalar>(truth: &GroundTruth<T>) -> Result<T, GeometryError> {
    match &truth.solution_set {
        SolutionSet::SphereSlice { anchor, .. } => Ok(sin_gamma_of(norm(anchor))),
        _ => Err(GeometryError::NotApplicable(format!(
            "sin γ is defined for hard case 2 (ii), got {}",
            truth.case.kind
        ))),
    }
}

pub fn sin_gamma_of<T: Scalar>(xbar_norm: T) -> T {
    let one = T::one();
    let m = one - xbar_norm;
    m / (m * m + one - xbar_norm * xbar_norm).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::solve_default;
    use approx::assert_abs_diff_eq;

    fn diag_m1_1(b: [f64; 2]) -> TrsInstance<f64> {
        TrsInstance::from_rows(2, vec![-1.0, 0.0, 0.0, 1.0], b.to_vec()).unwrap()
    }

    #[test]
    fn ball_projection() {
        assert_eq!(project_ball(&[3.0, 4.0]), vec![0.6, 0.8]);
        assert_eq!(project_ball(&[0.3, 0.0]), vec![0.3, 0.0]);
        assert_eq!(project_ball(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn s1_projection_examples() {
        let (s, t) = solve_default(&diag_m1_1([0.0, 0.5])).unwrap();
        let r = 0.9375f64.sqrt();
        assert_eq!(project_s1(&t, &s, &[0.5, 0.25]).unwrap(), vec![0.5, 0.25]);
        assert_eq!(project_s1(&t, &s, &[0.0, 0.5]).unwrap(), vec![0.0, 0.25]);
        let p = project_s1(&t, &s, &[2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(p[0], r, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn s1_rejects_convex() {
        let p = TrsInstance::from_rows(2, vec![1.0, 0.0, 0.0, 2.0], vec![0.1, 0.1]).unwrap();
        let (s, t) = solve_default(&p).unwrap();
        assert!(matches!(project_s1(&t, &s, &[0.0, 0.0]), Err(GeometryError::NotApplicable(_))));
    }

    #[test]
    fn s0_projection_examples() {
        let (s, t) = solve_default(&diag_m1_1([0.0, 0.5])).unwrap();
        let r = 0.9375f64.sqrt();
        let (p, whole) = project_s0(&t, &s, &[0.5, 0.25]).unwrap();
        assert!(!whole);
        assert_abs_diff_eq!(p[0], r, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(dist_s0(&t, &s, &[0.5, 0.25]), r - 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r - 0.5, 0.468246, epsilon = 1e-6);

        let (_, whole) = project_s0(&t, &s, &[0.0, 0.5]).unwrap();
        assert!(whole);
        assert_abs_diff_eq!(dist_s0(&t, &s, &[0.0, 0.5]), 1.0, epsilon = 1e-15);
        // every explicit member of S₀ is at distance 1
        for sign in [-1.0, 1.0] {
            assert_abs_diff_eq!(linalg::dist(&[0.0, 0.5], &[sign * r, 0.25]), 1.0, epsilon = 1e-15);
        }
        assert_eq!(dist_s0(&t, &s, &[r, 0.25]), 0.0);

        let (s, t) = solve_default(&diag_m1_1([1.0, 0.0])).unwrap();
        let (p, whole) = project_s0(&t, &s, &[0.0, 0.0]).unwrap();
        assert!(!whole);
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dist_s0(&t, &s, &[0.0, 1.0]), 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn nu_examples() {
        assert_eq!(nu(&diag_m1_1([1.0, 0.0]), &[1.0, 0.0]).unwrap(), 4.0);
        let id = TrsInstance::from_rows(2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(nu(&id, &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(nu(&diag_m1_1([0.0, 2.0]), &[1.0, 0.0]).unwrap(), 2.0);
        assert!(matches!(nu(&id, &[0.5, 0.0]), Err(GeometryError::NotOnBoundary(_))));
    }

    #[test]
    fn kl_residual_examples() {
        assert_eq!(kl_residual(&diag_m1_1([1.0, 0.0]), &[1.0, 0.0]), 0.0);
        assert_eq!(kl_residual(&diag_m1_1([0.0, 2.0]), &[1.0, 0.0]), 4.0);
        assert_eq!(kl_residual(&diag_m1_1([0.0, 2.0]), &[1.5, 0.0]), f64::INFINITY);
        assert_eq!(kl_residual(&diag_m1_1([0.0, 2.0]), &[0.5, 0.0]), norm(&[-1.0, -4.0]));
    }

    #[test]
    fn frame_examples() {
        let e3 = diag_m1_1([0.0, 2.0]);
        let (s, t) = solve_default(&e3).unwrap();
        let f = boundary_frame(&t, &s, &[1.0, 0.0]).unwrap();
        assert_eq!(f.z, vec![1.0, -1.0]);
        assert_eq!(f.alpha, -2.0);
        assert_eq!(f.beta, 2.0);
        assert_eq!(h_value(&f, &s), 4.0);
        assert_eq!(h_expansion(&f, &s), 4.0);
        let r = kl_residual(&e3, &[1.0, 0.0]);
        assert_eq!(r * r, 4.0 * h_value(&f, &s));

        let f = boundary_frame(&t, &s, &[0.0, 1.0]).unwrap();
        assert_eq!((f.alpha, f.beta, f.gamma_sq), (0.0, 0.0, 0.0));
        assert_eq!(h_value(&f, &s), 0.0);
        assert_eq!(h_expansion(&f, &s), 0.0);

        let th = 0.1f64;
        let x = [th.sin(), th.cos()];
        let f = boundary_frame(&t, &s, &x).unwrap();
        let c = th.cos() - 1.0;
        let closed = 4.0 * c * c - (2.0 * c + 2.0 * c * c).powi(2);
        assert_abs_diff_eq!(h_value(&f, &s), closed, epsilon = 1e-15);
        let r = kl_residual(&e3, &x);
        assert_abs_diff_eq!(r * r / 4.0, closed, epsilon = 1e-10);

        let (s, t) = solve_default(&diag_m1_1([0.0, 0.5])).unwrap();
        let xs = t.x_star.clone();
        let f = boundary_frame(&t, &s, &xs).unwrap();
        assert_eq!(f.gamma_sq, 0.0);
    }

    #[test]
    fn frame_rejects_easy() {
        let (s, t) = solve_default(&diag_m1_1([1.0, 0.0])).unwrap();
        assert!(matches!(boundary_frame(&t, &s, &[1.0, 0.0]), Err(GeometryError::NotApplicable(_))));
    }

    #[test]
    fn sin_gamma_examples() {
        let (_, t) = solve_default(&diag_m1_1([0.0, 0.0])).unwrap();
        assert_abs_diff_eq!(sin_gamma(&t).unwrap(), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        let (_, t) = solve_default(&diag_m1_1([0.0, 0.5])).unwrap();
        assert_abs_diff_eq!(sin_gamma(&t).unwrap(), 0.75 / 1.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(sin_gamma(&t).unwrap(), 0.6123724, epsilon = 1e-7);
        let mut prev = 1.0;
        for p in [0.5, 0.9, 0.99, 0.999, 0.999999] {
            let v = sin_gamma_of(p);
            assert!(v > 0.0 && v < prev);
            prev = v;
        }
        let (_, t) = solve_default(&diag_m1_1([1.0, 0.0])).unwrap();
        assert!(sin_gamma(&t).is_err());
    }
}
