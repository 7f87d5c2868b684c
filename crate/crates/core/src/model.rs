//! TRS instances, objective evaluation, KKT residuals and the case taxonomy.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, dot, norm, SpectralData, SymMatrix};
use crate::scalar::Scalar;
use crate::solver::GroundTruth;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("instance dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("b has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("A must be nonzero")]
    ZeroMatrix,
    #[error("b contains a non-finite entry at index {0}")]
    NonFiniteVector(usize),
    #[error("ambiguous case: {0}")]
    AmbiguousCase(String),
    #[error("reduction requires K < n, but A − λ₁I = 0 (K = n = {0})")]
    FullNullSpace(usize),
    #[error("reduction requires b ⟂ Null(A − λ₁I); null component has norm {0:e}")]
    NotPerpendicular(f64),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}

/// `min xᵀAx − 2bᵀx` subject to `‖x‖ ≤ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrsInstance<T> {
    a: SymMatrix<T>,
    b: Vec<T>,
}

impl<T: Scalar> TrsInstance<T> {
    pub fn new(a: SymMatrix<T>, b: Vec<T>) -> Result<Self, ModelError> {
        if a.n() < 2 {
            return Err(ModelError::DimensionTooSmall(a.n()));
        }
        if a.max_abs() == T::zero() {
            return Err(ModelError::ZeroMatrix);
        }
        Self::with_any_dim(a, b)
    }

    /// Skips the `n ≥ 2` and nonzero checks; used for reduced instances.
    pub(crate) fn with_any_dim(a: SymMatrix<T>, b: Vec<T>) -> Result<Self, ModelError> {
        if b.len() != a.n() {
            return Err(ModelError::DimensionMismatch { expected: a.n(), got: b.len() });
        }
        if let Some(i) = b.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteVector(i));
        }
        Ok(Self { a, b })
    }

    /// Builds an instance from row-major entries.
    pub fn from_rows(n: usize, a: Vec<T>, b: Vec<T>) -> Result<Self, ModelError> {
        Self::new(SymMatrix::new(n, a)?, b)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.a.n()
    }

    #[inline]
    pub fn a(&self) -> &SymMatrix<T> {
        &self.a
    }

    #[inline]
    pub fn b(&self) -> &[T] {
        &self.b
    }

    pub fn cast<U: Scalar>(&self) -> TrsInstance<U> {
        TrsInstance { a: self.a.cast(), b: linalg::cast_vec(&self.b) }
    }

    pub fn decompose(&self, null_tol: T) -> Result<SpectralData<T>, ModelError> {
        Ok(linalg::spectral_decompose(&self.a, null_tol)?)
    }
}

/// `f(x) = xᵀAx − 2bᵀx`
pub fn f_value<T: Scalar>(inst: &TrsInstance<T>, x: &[T]) -> T {
    let two = T::lit(2.0);
    inst.a.quad_form(x) - two * dot(&inst.b, x)
}

/// `∇f(x) = 2(Ax − b)`
pub fn grad_f<T: Scalar>(inst: &TrsInstance<T>, x: &[T]) -> Vec<T> {
    let two = T::lit(2.0);
    inst.a.mul_vec(x).iter().zip(&inst.b).map(|(&ax, &bi)| two * (ax - bi)).collect()
}

/// Relaxed objective `f̃(x) = xᵀ(A − λ₁I)x − 2bᵀx + λ₁`.
pub fn f_tilde<T: Scalar>(inst: &TrsInstance<T>, s: &SpectralData<T>, x: &[T]) -> T {
    let l1 = s.lambda1;
    f_value(inst, x) - l1 * dot(x, x) + l1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseKind {
    ConvexInteriorMin,
    ConvexBoundaryUnique,
    ConvexBoundaryFlat,
    Easy,
    Hard1,
    Hard2i,
    Hard2ii,
}

impl CaseKind {
    pub const ALL: [CaseKind; 7] = [
        CaseKind::ConvexInteriorMin,
        CaseKind::ConvexBoundaryUnique,
        CaseKind::ConvexBoundaryFlat,
        CaseKind::Easy,
        CaseKind::Hard1,
        CaseKind::Hard2i,
        CaseKind::Hard2ii,
    ];

    pub fn is_convex(self) -> bool {
        matches!(
            self,
            CaseKind::ConvexInteriorMin | CaseKind::ConvexBoundaryUnique | CaseKind::ConvexBoundaryFlat
        )
    }

    /// Whether the case lies in the ill-posed regime by construction.
    pub fn is_ill(self) -> bool {
        matches!(self, CaseKind::Hard2i | CaseKind::ConvexBoundaryFlat)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CaseKind::ConvexInteriorMin => "ConvexInteriorMin",
            CaseKind::ConvexBoundaryUnique => "ConvexBoundaryUnique",
            CaseKind::ConvexBoundaryFlat => "ConvexBoundaryFlat",
            CaseKind::Easy => "Easy",
            CaseKind::Hard1 => "Hard1",
            CaseKind::Hard2i => "Hard2i",
            CaseKind::Hard2ii => "Hard2ii",
        }
    }
}

impl fmt::Display for CaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseLabel {
    pub kind: CaseKind,
    pub trs_ill: bool,
}

impl CaseLabel {
    pub fn of(kind: CaseKind) -> Self {
        Self { kind, trs_ill: kind.is_ill() }
    }
}

/// Tolerances used by the classifier. The eigenvalue-zero threshold comes from
/// the spectral data (`null_tol · max(1, ‖A‖₂)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances<T> {
    /// `b ⟂ Null` iff the null component of b is at most `perp · max(1, ‖b‖)`.
    pub perp: T,
    /// `λ* ≈ −λ₁` iff `|λ* + λ₁| ≤ multiplier · max(1, |λ₁|)`.
    pub multiplier: T,
    /// Band around 1 for anchor norms.
    pub norm: T,
    /// Residual target of the secular solve.
    pub secular: T,
}

impl<T: Scalar> Default for Tolerances<T> {
    fn default() -> Self {
        Self {
            perp: T::lit(1e-8),
            multiplier: T::lit(1e-8),
            norm: T::lit(1e-8),
            secular: T::lit(1e-12),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport<T> {
    pub lambda_star: T,
    pub stationarity_residual: T,
    pub psd_violation: T,
    pub complementarity: T,
    pub feasibility: T,
}

impl<T: Scalar> KktReport<T> {
    pub fn max_residual(&self) -> T {
        self.stationarity_residual
            .max(self.psd_violation)
            .max(self.complementarity)
            .max(self.feasibility)
    }
}

/// KKT residuals of `(x, λ)`; computes λ₁ from a fresh decomposition.
pub fn kkt_report<T: Scalar>(
    inst: &TrsInstance<T>,
    x: &[T],
    lambda: T,
) -> Result<KktReport<T>, ModelError> {
    let s = inst.decompose(T::lit(linalg::DEFAULT_NULL_TOL))?;
    Ok(kkt_report_with(inst, &s, x, lambda))
}

pub fn kkt_report_with<T: Scalar>(
    inst: &TrsInstance<T>,
    s: &SpectralData<T>,
    x: &[T],
    lambda: T,
) -> KktReport<T> {
    let mut r = inst.a.mul_vec(x);
    for ((ri, &xi), &bi) in r.iter_mut().zip(x).zip(&inst.b) {
        *ri = *ri + lambda * xi - bi;
    }
    let xx = dot(x, x);
    KktReport {
        lambda_star: lambda,
        stationarity_residual: norm(&r),
        psd_violation: T::zero().max(-(s.lambda1 + lambda)),
        complementarity: (lambda * (T::one() - xx)).abs(),
        feasibility: T::zero().max(xx - T::one()),
    }
}

/// Norm of the projection of `b` onto `Null(A − λ₁I)`.
pub fn null_component_norm<T: Scalar>(inst: &TrsInstance<T>, s: &SpectralData<T>) -> T {
    norm(&linalg::null_coords(s, &inst.b))
}

/// Whether `λ₁` counts as zero for the given decomposition.
pub fn lambda1_is_zero<T: Scalar>(s: &SpectralData<T>) -> bool {
    s.lambda1.abs() <= s.zero_threshold()
}

/// Assigns the case label from the ground truth's multiplier and anchor norm.
pub fn classify<T: Scalar>(
    inst: &TrsInstance<T>,
    s: &SpectralData<T>,
    truth: &GroundTruth<T>,
    tol: &Tolerances<T>,
) -> Result<CaseLabel, ModelError> {
    let one = T::one();
    let l1 = s.lambda1;
    let b_scale = one.max(norm(&inst.b));
    let b_perp = null_component_norm(inst, s) <= tol.perp * b_scale;
    let p = truth.anchor_norm;
    let above = p > one + tol.norm;
    let below = p < one - tol.norm;

    let kind = if l1 < -s.zero_threshold() {
        if !b_perp {
            CaseKind::Easy
        } else {
            let at_shift = (truth.lambda_star + l1).abs() <= tol.multiplier * one.max(l1.abs());
            match (above, below, at_shift) {
                (true, _, false) => CaseKind::Hard1,
                (false, false, true) => CaseKind::Hard2i,
                (false, true, true) => CaseKind::Hard2ii,
                _ => {
                    return Err(ModelError::AmbiguousCase(format!(
                        "b ⟂ Null(A − λ₁I) with ‖(A − λ₁I)†b‖ = {p} but λ* = {} against −λ₁ = {}",
                        truth.lambda_star, -l1
                    )))
                }
            }
        }
    } else if lambda1_is_zero(s) && !b_perp {
        CaseKind::ConvexBoundaryUnique
    } else if below {
        CaseKind::ConvexInteriorMin
    } else if above {
        CaseKind::ConvexBoundaryUnique
    } else if lambda1_is_zero(s) {
        CaseKind::ConvexBoundaryFlat
    } else {
        return Err(ModelError::AmbiguousCase(format!(
            "λ₁ = {l1} > 0 and the unconstrained minimizer has norm {p}, within the band around 1"
        )));
    };
    Ok(CaseLabel::of(kind))
}

/// The `(n − K)`-dimensional instance `q(z) = zᵀMz − 2b'ᵀz` with
/// `M = Diag(λ_{K+1}, …, λ_n)` and `b' = U_K(Pᵀb)`.
pub fn reduce_to_range<T: Scalar>(
    inst: &TrsInstance<T>,
    s: &SpectralData<T>,
) -> Result<TrsInstance<T>, ModelError> {
    let n = inst.n();
    if s.k >= n {
        return Err(ModelError::FullNullSpace(n));
    }
    let null = null_component_norm(inst, s);
    if null > T::lit(1e-8) * T::one().max(norm(&inst.b)) {
        return Err(ModelError::NotPerpendicular(null.to_f64_lossy()));
    }
    let c = s.to_eigen(&inst.b);
    let a = SymMatrix::from_diag(&s.eigvals[s.k..]);
    TrsInstance::with_any_dim(a, c[s.k..].to_vec())
}

/// `U_K(Pᵀx)`: coordinates of `x` in the reduced space.
pub fn reduce_point<T: Scalar>(s: &SpectralData<T>, x: &[T]) -> Vec<T> {
    s.to_eigen(x)[s.k..].to_vec()
}
