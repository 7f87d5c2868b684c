//! Seeded instance generators that land in a chosen case by construction.
//!
//! Every instance is built in the eigenbasis from a unit (or `xbar_norm`-long)
//! vector `y` and a multiplier `λ*` via `b = (Λ + λ*I) y`, so the KKT system
//! holds exactly and the planted ground truth needs no solver. With `rotate`
//! the data is conjugated by a random orthogonal `Q`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, norm, Mat, SymMatrix};
use crate::model::{self, CaseKind, CaseLabel, ModelError, TrsInstance};
use crate::scalar::Scalar;
use crate::solver::{GroundTruth, SolutionSet};

/// Project-wide pseudo-random generator: ChaCha with 8 rounds, seeded from a `u64`.
pub type ProjectRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> ProjectRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("infeasible generator spec: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn default_gap() -> f64 {
    1.0
}
fn default_mult() -> usize {
    1
}
fn default_xbar() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub n: usize,
    pub case_target: CaseKind,
    #[serde(default)]
    pub seed: u64,
    /// `λ_{K+1} − λ₁`
    #[serde(default = "default_gap")]
    pub spectrum_gap: f64,
    /// Multiplicity of λ₁.
    #[serde(default = "default_mult")]
    pub mult_k: usize,
    /// Anchor norm `‖x̄‖` (hard case 2) or `‖x̃‖` (convex interior minimum).
    #[serde(default = "default_xbar")]
    pub xbar_norm: f64,
    #[serde(default = "default_true")]
    pub rotate: bool,
    /// Use `λ₁ = 0` for the `ConvexInteriorMin` and `ConvexBoundaryUnique` targets.
    #[serde(default)]
    pub flat: bool,
    /// Explicit ascending eigenvalues; overrides the drawn spectrum and `mult_k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<f64>>,
}

impl GenSpec {
    pub fn new(n: usize, case_target: CaseKind, seed: u64) -> Self {
        Self {
            n,
            case_target,
            seed,
            spectrum_gap: default_gap(),
            mult_k: default_mult(),
            xbar_norm: default_xbar(),
            rotate: true,
            flat: false,
            spectrum: None,
        }
    }

    fn is_flat(&self) -> bool {
        self.case_target == CaseKind::ConvexBoundaryFlat || (self.case_target.is_convex() && self.flat)
    }

    fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::Infeasible(m));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if !(self.spectrum_gap > 0.0 && self.spectrum_gap.is_finite()) {
            return bad(format!("spectrum_gap must be positive, got {}", self.spectrum_gap));
        }
        if self.spectrum.is_none() && (self.mult_k == 0 || self.mult_k >= self.n) {
            return bad(format!("mult_k must lie in [1, n), got {} for n = {}", self.mult_k, self.n));
        }
        if !(0.0..=1.0).contains(&self.xbar_norm) {
            return bad(format!("xbar_norm must lie in [0, 1], got {}", self.xbar_norm));
        }
        match self.case_target {
            CaseKind::Hard2ii if self.xbar_norm >= 1.0 => {
                return bad("Hard2ii needs xbar_norm < 1".into());
            }
            CaseKind::ConvexInteriorMin if self.xbar_norm >= 1.0 => {
                return bad("ConvexInteriorMin needs xbar_norm < 1".into());
            }
            k if self.flat && !k.is_convex() => {
                return bad(format!("flat is only meaningful for convex targets, got {k}"));
            }
            _ => {}
        }
        if let Some(sp) = &self.spectrum {
            if sp.len() != self.n {
                return bad(format!("spectrum has {} entries, expected {}", sp.len(), self.n));
            }
            if sp.windows(2).any(|w| !(w[0] <= w[1])) {
                return bad("spectrum must be ascending".into());
            }
            let l1 = sp[0];
            let k = sp.iter().filter(|&&l| l == l1).count();
            if k == self.n {
                return bad("spectrum must contain at least two distinct values".into());
            }
            let ok = if self.case_target.is_convex() {
                if self.is_flat() {
                    l1 == 0.0
                } else {
                    l1 > 0.0
                }
            } else {
                l1 < 0.0
            };
            if !ok {
                return bad(format!("λ₁ = {l1} does not fit target {}", self.case_target));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PlantedInstance<T> {
    pub inst: TrsInstance<T>,
    pub planted: GroundTruth<T>,
}

fn unit<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(u) = linalg::normalized(&v) {
            return u;
        }
    }
}

/// `n`-vector with the first `k` coordinates `a·u` and the rest `r·w` for random unit `u`, `w`.
fn split_vector<R: Rng>(rng: &mut R, n: usize, k: usize, a: f64, r: f64) -> Vec<f64> {
    let u = unit(rng, k);
    let w = unit(rng, n - k);
    u.iter().map(|v| a * v).chain(w.iter().map(|v| r * v)).collect()
}

/// Haar-distributed orthogonal matrix: modified Gram–Schmidt QR of a Gaussian
/// matrix, which yields `R` with positive diagonal.
pub fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> Mat<f64> {
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    for j in 0..n {
        for _ in 0..2 {
            for i in 0..j {
                let (head, tail) = cols.split_at_mut(j);
                let c = linalg::dot(&head[i], &tail[0]);
                linalg::axpy(-c, &head[i], &mut tail[0]);
            }
        }
        let nj = norm(&cols[j]);
        cols[j].iter_mut().for_each(|v| *v /= nj);
    }
    Mat::from_columns(&cols)
}

fn positive_leading(mut v: Vec<f64>) -> Vec<f64> {
    if let Some(first) = v.iter().find(|x| x.abs() > f64::EPSILON.sqrt()) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    v
}

pub fn generate<T: Scalar>(spec: &GenSpec) -> Result<PlantedInstance<T>, GenError> {
    spec.validate()?;
    let n = spec.n;
    let kind = spec.case_target;
    let flat = spec.is_flat();
    let mut rng = rng_from_seed(spec.seed);

    let eig: Vec<f64> = match &spec.spectrum {
        Some(sp) => sp.clone(),
        None => {
            let l1 = if !kind.is_convex() {
                -rng.random_range(0.5..2.0)
            } else if flat {
                0.0
            } else {
                rng.random_range(0.2..1.0)
            };
            let mut rest: Vec<f64> = (0..n - spec.mult_k).map(|_| rng.random_range(0.0..2.0)).collect();
            rest.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let shift = l1 + spec.spectrum_gap - rest[0];
            std::iter::repeat_n(l1, spec.mult_k).chain(rest.into_iter().map(|v| v + shift)).collect()
        }
    };
    let l1 = eig[0];
    let k = eig.iter().filter(|&&l| l == l1).count();
    let shift_draw = rng.random_range(0.3..1.3);

    // (λ*, y, solution set in eigen coordinates)
    let (lambda_star, y): (f64, Vec<f64>) = match kind {
        CaseKind::Easy => {
            let a = rng.random_range(0.3..0.9);
            (-l1 + shift_draw, split_vector(&mut rng, n, k, a, (1.0 - a * a).sqrt()))
        }
        CaseKind::Hard1 => (-l1 + shift_draw, split_vector(&mut rng, n, k, 0.0, 1.0)),
        CaseKind::Hard2i => (-l1, split_vector(&mut rng, n, k, 0.0, 1.0)),
        CaseKind::Hard2ii => (-l1, split_vector(&mut rng, n, k, 0.0, spec.xbar_norm)),
        CaseKind::ConvexInteriorMin => {
            let y = if flat {
                split_vector(&mut rng, n, k, 0.0, spec.xbar_norm)
            } else {
                linalg::scale(spec.xbar_norm, &unit(&mut rng, n))
            };
            (0.0, y)
        }
        CaseKind::ConvexBoundaryUnique => (shift_draw, unit(&mut rng, n)),
        CaseKind::ConvexBoundaryFlat => (0.0, split_vector(&mut rng, n, k, 0.0, 1.0)),
    };
    let q = if spec.rotate { random_orthogonal(&mut rng, n) } else { Mat::identity(n) };

    // c = (Λ + λ*I) y, with exact zeros on the null block for hard case 2.
    let c: Vec<f64> = eig
        .iter()
        .zip(&y)
        .enumerate()
        .map(|(i, (&l, &yi))| if i < k && lambda_star == -l1 { 0.0 } else { (l + lambda_star) * yi })
        .collect();
    let anchor_e: Vec<f64> = if kind.is_convex() {
        eig.iter().zip(&c).map(|(&l, &ci)| if l == 0.0 { 0.0 } else { ci / l }).collect()
    } else {
        eig.iter()
            .zip(&c)
            .enumerate()
            .map(|(i, (&l, &ci))| if i < k { 0.0 } else { ci / (l - l1) })
            .collect()
    };
    let anchor_norm = norm(&anchor_e);
    let null_component = norm(&c[..k]);

    let a = SymMatrix::from_spectrum(&q, &eig);
    let b = q.mul_vec(&c);
    let x_y = q.mul_vec(&y);
    let basis: Vec<Vec<f64>> = (0..k).map(|i| q.col(i)).collect();
    let (x_star, set) = match kind {
        CaseKind::Hard2ii => {
            let r = (1.0 - spec.xbar_norm * spec.xbar_norm).sqrt();
            let mut basis = basis;
            basis[0] = positive_leading(basis[0].clone());
            let mut xs = x_y.clone();
            linalg::axpy(r, &basis[0], &mut xs);
            (xs, SolutionSet::SphereSlice { anchor: x_y, basis, radius: r })
        }
        CaseKind::ConvexInteriorMin if flat => {
            let r = (1.0 - spec.xbar_norm * spec.xbar_norm).sqrt();
            (x_y.clone(), SolutionSet::BallSlice { anchor: x_y, basis, radius: r })
        }
        _ => (x_y.clone(), SolutionSet::Singleton(x_y)),
    };

    let t = |v: f64| T::lit(v);
    let tv = |v: &[f64]| -> Vec<T> { linalg::cast_vec(v) };
    let inst: TrsInstance<T> = TrsInstance::new(a.cast(), tv(&b))?;
    let set_t = match set {
        SolutionSet::Singleton(x) => SolutionSet::Singleton(tv(&x)),
        SolutionSet::SphereSlice { anchor, basis, radius } => SolutionSet::SphereSlice {
            anchor: tv(&anchor),
            basis: basis.iter().map(|v| tv(v)).collect(),
            radius: t(radius),
        },
        SolutionSet::BallSlice { anchor, basis, radius } => SolutionSet::BallSlice {
            anchor: tv(&anchor),
            basis: basis.iter().map(|v| tv(v)).collect(),
            radius: t(radius),
        },
    };
    let x_star = tv(&x_star);
    let planted = GroundTruth {
        f_star: model::f_value(&inst, &x_star),
        lambda_star: t(lambda_star),
        x_star,
        case: CaseLabel::of(kind),
        solution_set: set_t,
        lambda1: t(l1),
        anchor_norm: t(anchor_norm),
        null_component: t(null_component),
    };
    Ok(PlantedInstance { inst, planted })
}

/// Scales `b` of a hard-case-2 (i) instance by `1 + eps`.
pub fn perturb_toward_ill<T: Scalar>(p: &PlantedInstance<T>, eps: T) -> Result<TrsInstance<T>, GenError> {
    if p.planted.case.kind != CaseKind::Hard2i {
        return Err(GenError::Infeasible(format!(
            "perturbation expects a Hard2i instance, got {}",
            p.planted.case.kind
        )));
    }
    let b = linalg::scale(T::one() + eps, p.inst.b());
    Ok(TrsInstance::new(p.inst.a().clone(), b)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{classify, Tolerances};
    use crate::solver::solve_default;
    use approx::assert_abs_diff_eq;

    fn fixed(kind: CaseKind, xbar: f64) -> GenSpec {
        GenSpec {
            rotate: false,
            xbar_norm: xbar,
            spectrum: Some(vec![-1.0, 1.0]),
            ..GenSpec::new(2, kind, 7)
        }
    }

    #[test]
    fn hard2i_fixed_spectrum() {
        let p = generate::<f64>(&fixed(CaseKind::Hard2i, 1.0)).unwrap();
        assert_eq!(p.inst.a().as_slice(), &[-1.0, 0.0, 0.0, 1.0]);
        assert_eq!(p.inst.b()[0], 0.0);
        assert_eq!(p.inst.b()[1].abs(), 2.0);
        assert_eq!(p.planted.x_star[1].abs(), 1.0);
        assert_eq!(p.planted.f_star, -3.0);
        let (_, t) = solve_default(&p.inst).unwrap();
        assert_eq!(t.case, p.planted.case);
        assert_eq!(t.f_star, -3.0);
    }

    #[test]
    fn hard2ii_fixed_spectrum() {
        let p = generate::<f64>(&fixed(CaseKind::Hard2ii, 0.25)).unwrap();
        assert_eq!(p.inst.b()[0], 0.0);
        assert_eq!(p.inst.b()[1].abs(), 0.5);
        match &p.planted.solution_set {
            SolutionSet::SphereSlice { radius, .. } => assert_abs_diff_eq!(*radius, 0.9375f64.sqrt()),
            other => panic!("unexpected set {other:?}"),
        }
    }

    #[test]
    fn easy_has_null_component() {
        let p = generate::<f64>(&GenSpec { rotate: false, ..GenSpec::new(2, CaseKind::Easy, 3) }).unwrap();
        assert!(p.inst.b()[0].abs() > 0.1);
        let (s, t) = solve_default(&p.inst).unwrap();
        let label = classify(&p.inst, &s, &t, &Tolerances::default()).unwrap();
        assert_eq!(label.kind, CaseKind::Easy);
    }

    #[test]
    fn perturbation_flips_case() {
        let p = generate::<f64>(&fixed(CaseKind::Hard2i, 1.0)).unwrap();
        let up = perturb_toward_ill(&p, 0.1).unwrap();
        assert_abs_diff_eq!(up.b()[1].abs(), 2.2, epsilon = 1e-15);
        let (_, t) = solve_default(&up).unwrap();
        assert_eq!(t.case.kind, CaseKind::Hard1);
        assert_abs_diff_eq!(t.anchor_norm, 1.1, epsilon = 1e-15);
        assert_eq!(perturb_toward_ill(&p, 0.0).unwrap(), p.inst);
        let (_, t) = solve_default(&perturb_toward_ill(&p, -0.5).unwrap()).unwrap();
        assert_eq!(t.case.kind, CaseKind::Hard2ii);
        assert_abs_diff_eq!(t.anchor_norm, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn rejects_infeasible_specs() {
        let bad = [
            GenSpec { xbar_norm: 1.0, ..GenSpec::new(3, CaseKind::Hard2ii, 0) },
            GenSpec { mult_k: 3, ..GenSpec::new(3, CaseKind::Easy, 0) },
            GenSpec { flat: true, ..GenSpec::new(3, CaseKind::Easy, 0) },
            GenSpec::new(1, CaseKind::Easy, 0),
            GenSpec { spectrum: Some(vec![1.0, 2.0]), ..GenSpec::new(2, CaseKind::Easy, 0) },
        ];
        for spec in bad {
            assert!(matches!(generate::<f64>(&spec), Err(GenError::Infeasible(_))), "{spec:?}");
        }
        let p = generate::<f64>(&GenSpec::new(3, CaseKind::Easy, 0)).unwrap();
        assert!(perturb_toward_ill(&p, 0.1).is_err());
    }

    #[test]
    fn orthogonal_matrix_is_orthogonal() {
        let q = random_orthogonal(&mut rng_from_seed(11), 6);
        let qtq = q.transpose().mul(&q);
        assert!(qtq.max_abs_diff(&Mat::identity(6)) < 1e-14);
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = GenSpec::new(5, CaseKind::Hard1, 42);
        let a = generate::<f64>(&spec).unwrap();
        let b = generate::<f64>(&spec).unwrap();
        assert_eq!(a.inst, b.inst);
    }
}
