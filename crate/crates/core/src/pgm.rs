//! Projected gradient method `x_{k+1} = Π_B(x_k − t∇f(x_k))` with full traces.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, project_ball};
use crate::linalg::{self, norm, SpectralData};
use crate::model::{self, TrsInstance};
use crate::scalar::Scalar;
use crate::solver::GroundTruth;

const MAX_BACKTRACKS: usize = 60;
/// Tolerance on `‖x0‖ ≤ 1` for given starting points.
const FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PgmError {
    #[error("step size {t} outside (0, 1/‖A‖₂) = (0, {limit})")]
    StepOutOfRange { t: f64, limit: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StepMode<T> {
    /// Fixed step `t`.
    Constant { t: T },
    /// Fixed step `t = factor / ‖A‖₂`.
    Scaled { factor: T },
    /// Backtracking from `t0` (default `1/‖A‖₂`) until
    /// `f(x) − f(x⁺) ≥ (c/t)‖x − x⁺‖²`.
    Backtracking { t0: Option<T>, shrink: T, c: T },
}

impl<T: Scalar> StepMode<T> {
    pub fn default_backtracking() -> Self {
        StepMode::Backtracking { t0: None, shrink: T::lit(0.5), c: T::lit(1e-4) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum X0Policy<T> {
    Given(Vec<T>),
    BestOfCandidates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PgmConfig<T> {
    pub step_mode: StepMode<T>,
    pub max_iter: usize,
    /// Stop once `f(x_k) − f* ≤ stop_tol · max(1, |f*|)`.
    pub stop_tol: T,
    pub x0_policy: X0Policy<T>,
    /// `N_loc` is the first `k` with `dist(x_k, S₀)` at most this.
    pub local_radius: T,
}

impl<T: Scalar> Default for PgmConfig<T> {
    fn default() -> Self {
        Self {
            step_mode: StepMode::Scaled { factor: T::lit(0.9) },
            max_iter: 2000,
            stop_tol: T::lit(1e-12),
            x0_policy: X0Policy::BestOfCandidates,
            local_radius: T::lit(0.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord<T> {
    pub k: usize,
    pub x: Vec<T>,
    pub f: T,
    /// `f(x_k) − f*`
    pub gap: T,
    /// `dist(−∇f(x_k), N_B(x_k))`
    pub residual: T,
    /// `‖x_{k+1} − x_k‖`; zero on the final record.
    pub step_len: T,
    /// Step size used from `x_k` to `x_{k+1}`; zero on the final record.
    pub t: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateTrace<T> {
    pub records: Vec<IterRecord<T>>,
    pub f_star: T,
    /// `‖A‖₂`
    pub norm_a: T,
    pub converged_to_global: bool,
    pub n_loc: Option<usize>,
    pub max_iter_exceeded: bool,
}

impl<T: Scalar> IterateTrace<T> {
    /// Slack of `f(x_k) − f(x_{k+1}) ≥ (1/t − ‖A‖₂)‖x_k − x_{k+1}‖²` per step.
    pub fn decrease_slacks(&self) -> Vec<T> {
        self.records
            .windows(2)
            .map(|w| {
                let (a, b) = (&w[0], &w[1]);
                let coef = T::one() / a.t - self.norm_a;
                (a.f - b.f) - coef * a.step_len * a.step_len
            })
            .collect()
    }

    pub fn last(&self) -> &IterRecord<T> {
        self.records.last().expect("trace has at least one record")
    }
}

/// Resolves the step size used by constant modes, validating the interval.
pub fn constant_step<T: Scalar>(mode: &StepMode<T>, norm_a: T) -> Result<Option<T>, PgmError> {
    let limit = T::one() / norm_a;
    let t = match *mode {
        StepMode::Constant { t } => t,
        StepMode::Scaled { factor } => factor * limit,
        StepMode::Backtracking { t0, shrink, c } => {
            let ok = shrink > T::zero() && shrink < T::one() && c > T::zero() && c < T::one();
            if !ok || t0.is_some_and(|t| t <= T::zero()) {
                return Err(PgmError::InvalidConfig(
                    "backtracking needs t0 > 0 and shrink, c in (0, 1)".into(),
                ));
            }
            return Ok(None);
        }
    };
    if !(t > T::zero() && t < limit) {
        return Err(PgmError::StepOutOfRange { t: t.to_f64_lossy(), limit: limit.to_f64_lossy() });
    }
    Ok(Some(t))
}

/// Start point: the best of `±v₁`, `Π_B((A + max(0, −λ₁)(1 + δ)I)†b)` with
/// `δ = 1e−3`, and `∓b/‖b‖`. Ties keep the earlier candidate.
pub fn default_x0<T: Scalar>(inst: &TrsInstance<T>, s: &SpectralData<T>) -> Vec<T> {
    let v1 = s.eigvec(0);
    let mut cands = vec![v1.clone(), linalg::scale(-T::one(), &v1)];
    let shift = T::zero().max(-s.lambda1) * (T::one() + T::lit(1e-3));
    cands.push(project_ball(&linalg::pinv_apply(s, shift, inst.b())));
    if let Some(u) = linalg::normalized(inst.b()) {
        cands.push(linalg::scale(-T::one(), &u));
        cands.push(u);
    }
    let mut best = 0;
    let mut best_f = model::f_value(inst, &cands[0]);
    for (i, c) in cands.iter().enumerate().skip(1) {
        let f = model::f_value(inst, c);
        if f < best_f {
            best = i;
            best_f = f;
        }
    }
    cands.swap_remove(best)
}

pub fn run<T: Scalar>(
    inst: &TrsInstance<T>,
    s: &SpectralData<T>,
    truth: &GroundTruth<T>,
    cfg: &PgmConfig<T>,
) -> Result<IterateTrace<T>, PgmError> {
    let norm_a = s.norm2();
    let fixed_t = constant_step(&cfg.step_mode, norm_a)?;
    let mut x = match &cfg.x0_policy {
        X0Policy::Given(x0) => {
            if x0.len() != inst.n() {
                return Err(PgmError::InvalidConfig(format!(
                    "x0 has dimension {}, expected {}",
                    x0.len(),
                    inst.n()
                )));
            }
            if norm(x0) > T::one() + T::lit(FEASIBILITY_SLACK) {
                return Err(PgmError::InvalidConfig(format!(
                    "x0 lies outside the unit ball (norm {})",
                    norm(x0).to_f64_lossy()
                )));
            }
            x0.clone()
        }
        X0Policy::BestOfCandidates => default_x0(inst, s),
    };
    let f_star = truth.f_star;
    let stop = cfg.stop_tol * T::one().max(f_star.abs());
    let mut records: Vec<IterRecord<T>> = Vec::with_capacity(cfg.max_iter.min(100_000) + 1);
    let mut n_loc = None;
    let mut converged = false;

    for k in 0..=cfg.max_iter {
        let f = model::f_value(inst, &x);
        let gap = f - f_star;
        if n_loc.is_none() && geometry::dist_s0(truth, s, &x) <= cfg.local_radius {
            n_loc = Some(k);
        }
        records.push(IterRecord {
            k,
            x: x.clone(),
            f,
            gap,
            residual: geometry::kl_residual(inst, &x),
            step_len: T::zero(),
            t: T::zero(),
        });
        if gap <= stop {
            converged = true;
            break;
        }
        if k == cfg.max_iter {
            break;
        }
        let g = model::grad_f(inst, &x);
        let (t, next) = match (fixed_t, &cfg.step_mode) {
            (Some(t), _) => (t, gradient_step(&x, &g, t)),
            (None, StepMode::Backtracking { t0, shrink, c }) => {
                let mut t = t0.unwrap_or(T::one() / norm_a);
                let mut next = gradient_step(&x, &g, t);
                for _ in 0..MAX_BACKTRACKS {
                    let d = linalg::dist(&x, &next);
                    if f - model::f_value(inst, &next) >= *c / t * d * d {
                        break;
                    }
                    t = t * *shrink;
                    next = gradient_step(&x, &g, t);
                }
                (t, next)
            }
            (None, _) => unreachable!("constant modes always resolve a step"),
        };
        let rec = records.last_mut().expect("record pushed above");
        rec.step_len = linalg::dist(&x, &next);
        rec.t = t;
        x = next;
    }

    let last_gap = records.last().map_or(T::infinity(), |r| r.gap);
    Ok(IterateTrace {
        f_star,
        norm_a,
        converged_to_global: converged || last_gap <= stop,
        max_iter_exceeded: !converged && records.len() > cfg.max_iter,
        n_loc,
        records,
    })
}

fn gradient_step<T: Scalar>(x: &[T], g: &[T], t: T) -> Vec<T> {
    let mut y = x.to_vec();
    linalg::axpy(-t, g, &mut y);
    project_ball(&y)
}

/// `M = τ(2‖A‖₂ + 1/t) / √(1/t − ‖A‖₂)`.
pub fn rate_constant<T: Scalar>(tau_kl: T, norm_a: T, t: T) -> T {
    let inv_t = T::one() / t;
    tau_kl * (T::lit(2.0) * norm_a + inv_t) / (inv_t - norm_a).sqrt()
}

/// Euclidean length of the projected-gradient residual `x − Π_B(x − t∇f(x))`.
pub fn fixed_point_residual<T: Scalar>(inst: &TrsInstance<T>, x: &[T], t: T) -> T {
    let g = model::grad_f(inst, x);
    norm(&linalg::sub(x, &gradient_step(x, &g, t)))
}
