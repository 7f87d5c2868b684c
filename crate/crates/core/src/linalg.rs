//! Dense symmetric linear algebra: vectors as slices, a row-major matrix type,
//! a cyclic Jacobi eigensolver and the spectral helpers built on top of it.

use thiserror::Error;

use crate::scalar::Scalar;

/// Default relative tolerance for eigenvalue multiplicity and pseudoinverse cut-off.
pub const DEFAULT_NULL_TOL: f64 = 1e-9;

const MAX_SWEEPS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix dimension must be at least {min}, got {n}")]
    DimensionTooSmall { n: usize, min: usize },
    #[error("expected {expected} entries, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error(
        "Jacobi eigensolver did not converge after {sweeps} sweeps: off-diagonal norm {off_norm:e}, \
         Frobenius norm {frobenius:e}, diagonal magnitude range [{diag_min_abs:e}, {diag_max_abs:e}] \
         (condition estimate {condition_estimate:e})"
    )]
    EigenNoConvergence {
        sweeps: usize,
        off_norm: f64,
        frobenius: f64,
        diag_min_abs: f64,
        diag_max_abs: f64,
        condition_estimate: f64,
    },
}

// ---------------------------------------------------------------------------
// Vector helpers

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm_sq<T: Scalar>(a: &[T]) -> T {
    dot(a, a)
}

/// Euclidean norm, scaled to avoid overflow for large entries.
pub fn norm<T: Scalar>(a: &[T]) -> T {
    let m = a.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    if m == T::zero() || !m.is_finite() {
        return m;
    }
    let s = a.iter().fold(T::zero(), |acc, &x| {
        let y = x / m;
        acc + y * y
    });
    m * s.sqrt()
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn add<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub fn scale<T: Scalar>(c: T, a: &[T]) -> Vec<T> {
    a.iter().map(|&x| c * x).collect()
}

/// `y += c * x`
pub fn axpy<T: Scalar>(c: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

pub fn dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    norm(&sub(a, b))
}

/// Returns `x / ‖x‖`, or `None` for the zero vector.
pub fn normalized<T: Scalar>(x: &[T]) -> Option<Vec<T>> {
    let nx = norm(x);
    if nx > T::zero() {
        Some(scale(T::one() / nx, x))
    } else {
        None
    }
}

pub fn cast_vec<S: Scalar, T: Scalar>(v: &[S]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x.to_f64_lossy())).collect()
}

// ---------------------------------------------------------------------------
// Dense matrices

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::ShapeMismatch { expected: rows * cols, got: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<T>]) -> Self {
        let c = cols.len();
        let r = cols.first().map_or(0, Vec::len);
        let mut m = Self::zeros(r, c);
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                m.data[i * c + j] = v;
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `M v`
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols, "dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `Mᵀ v`
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.rows, "dimension mismatch");
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            axpy(vi, self.row(i), &mut out);
        }
        out
    }

    pub fn mul(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, other.rows, "dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Mat<T>) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

/// Dense symmetric matrix, stored in full row-major form.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> SymMatrix<T> {
    /// Builds a symmetric matrix from `n·n` row-major entries, replacing each
    /// off-diagonal pair by its average.
    pub fn new(n: usize, data: Vec<T>) -> Result<Self, LinalgError> {
        if n == 0 {
            return Err(LinalgError::DimensionTooSmall { n, min: 1 });
        }
        if data.len() != n * n {
            return Err(LinalgError::ShapeMismatch { expected: n * n, got: data.len() });
        }
        for (idx, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(LinalgError::NonFinite { row: idx / n, col: idx % n });
            }
        }
        let mut m = Self { n, data };
        let half = T::lit(0.5);
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = (m.data[i * n + j] + m.data[j * n + i]) * half;
                m.data[i * n + j] = avg;
                m.data[j * n + i] = avg;
            }
        }
        Ok(m)
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let n = diag.len();
        let mut data = vec![T::zero(); n * n];
        for (i, &v) in diag.iter().enumerate() {
            data[i * n + i] = v;
        }
        Self { n, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![T::one(); n])
    }

    /// `Q Diag(λ) Qᵀ`, symmetrized.
    pub fn from_spectrum(q: &Mat<T>, eigvals: &[T]) -> Self {
        let n = eigvals.len();
        assert_eq!(q.rows(), n);
        assert_eq!(q.cols(), n);
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            for j in i..n {
                let mut acc = T::zero();
                for (k, &lk) in eigvals.iter().enumerate() {
                    acc += q.get(i, k) * lk * q.get(j, k);
                }
                data[i * n + j] = acc;
                data[j * n + i] = acc;
            }
        }
        Self { n, data }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.n, "dimension mismatch");
        (0..self.n).map(|i| dot(self.row(i), v)).collect()
    }

    /// `xᵀ M x`
    pub fn quad_form(&self, x: &[T]) -> T {
        dot(x, &self.mul_vec(x))
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> T {
        norm(&self.data)
    }

    pub fn to_mat(&self) -> Mat<T> {
        Mat { rows: self.n, cols: self.n, data: self.data.clone() }
    }

    /// `Q M Qᵀ`
    pub fn conjugate(&self, q: &Mat<T>) -> Self {
        let m = q.mul(&self.to_mat()).mul(&q.transpose());
        Self::new(self.n, m.data).expect("conjugate of a finite matrix is finite")
    }

    pub fn cast<U: Scalar>(&self) -> SymMatrix<U> {
        SymMatrix { n: self.n, data: cast_vec(&self.data) }
    }
}

// ---------------------------------------------------------------------------
// Spectral data

/// Eigendecomposition `A = P Diag(λ) Pᵀ` with the quantities derived from λ₁.
#[derive(Debug, Clone)]
pub struct SpectralData<T> {
    /// Ascending eigenvalues.
    pub eigvals: Vec<T>,
    /// Orthogonal matrix whose columns are the eigenvectors.
    pub eigvecs: Mat<T>,
    pub lambda1: T,
    /// `d_i = 0` for `i < k`, `λ_i − λ₁` otherwise.
    pub d: Vec<T>,
    /// Multiplicity of λ₁ within tolerance.
    pub k: usize,
    pub null_tol: T,
    /// `max(1, ‖A‖₂)`
    pub scale: T,
}

impl<T: Scalar> SpectralData<T> {
    #[inline]
    pub fn n(&self) -> usize {
        self.eigvals.len()
    }

    pub fn eigvec(&self, i: usize) -> Vec<T> {
        self.eigvecs.col(i)
    }

    /// `Pᵀ x`
    pub fn to_eigen(&self, x: &[T]) -> Vec<T> {
        self.eigvecs.tr_mul_vec(x)
    }

    /// `P y`
    pub fn from_eigen(&self, y: &[T]) -> Vec<T> {
        self.eigvecs.mul_vec(y)
    }

    /// Orthonormal basis of `Null(A − λ₁I)`: the first `k` eigenvectors.
    pub fn null_basis(&self) -> Vec<Vec<T>> {
        (0..self.k).map(|i| self.eigvec(i)).collect()
    }

    /// `‖A‖₂ = max |λ_i|`
    pub fn norm2(&self) -> T {
        self.eigvals.iter().fold(T::zero(), |m, &l| m.max(l.abs()))
    }

    /// Absolute threshold below which an eigenvalue is treated as zero.
    pub fn zero_threshold(&self) -> T {
        self.null_tol * self.scale
    }

    pub fn reconstruct(&self) -> SymMatrix<T> {
        SymMatrix::from_spectrum(&self.eigvecs, &self.eigvals)
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Eigenvalues are sorted ascending and each eigenvector has its first
/// nonzero component positive.
pub fn spectral_decompose<T: Scalar>(
    a: &SymMatrix<T>,
    null_tol: T,
) -> Result<SpectralData<T>, LinalgError> {
    let n = a.n();
    let (vals, vecs) = jacobi_eigen(a)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).expect("finite eigenvalues"));
    let eigvals: Vec<T> = order.iter().map(|&i| vals[i]).collect();
    let sign_cut = T::epsilon().sqrt();
    let mut eigvecs = Mat::zeros(n, n);
    for (j, &src) in order.iter().enumerate() {
        let mut col = vecs.col(src);
        if let Some(first) = col.iter().find(|v| v.abs() > sign_cut) {
            if *first < T::zero() {
                col.iter_mut().for_each(|v| *v = -*v);
            }
        }
        for (i, v) in col.into_iter().enumerate() {
            eigvecs.set(i, j, v);
        }
    }

    let lambda1 = eigvals[0];
    let norm2 = eigvals.iter().fold(T::zero(), |m, &l| m.max(l.abs()));
    let scale = T::one().max(norm2);
    let mult_cut = null_tol * scale.max(lambda1.abs());
    let k = eigvals.iter().take_while(|&&l| l - lambda1 <= mult_cut).count();
    let d = eigvals
        .iter()
        .enumerate()
        .map(|(i, &l)| if i < k { T::zero() } else { l - lambda1 })
        .collect();

    Ok(SpectralData { eigvals, eigvecs, lambda1, d, k, null_tol, scale })
}

fn jacobi_eigen<T: Scalar>(a: &SymMatrix<T>) -> Result<(Vec<T>, Mat<T>), LinalgError> {
    let n = a.n();
    let mut m = a.to_mat();
    let mut v = Mat::identity(n);
    let fro = a.frobenius();
    let eps = T::epsilon();
    let two = T::lit(2.0);

    let off_norm = |m: &Mat<T>| {
        let mut s = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                s += m.get(p, q) * m.get(p, q);
            }
        }
        (s * two).sqrt()
    };

    for _ in 0..MAX_SWEEPS {
        let off = off_norm(&m);
        if off == T::zero() || off <= eps * fro {
            return Ok(((0..n).map(|i| m.get(i, i)).collect(), v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == T::zero() {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                // Rotation is negligible at this precision: drop the entry.
                if apq.abs() <= eps * eps * (app.abs() + aqq.abs()) {
                    m.set(p, q, T::zero());
                    m.set(q, p, T::zero());
                    continue;
                }
                let theta = (aqq - app) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    m.set(k, p, c * akp - s * akq);
                    m.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = m.get(p, k);
                    let aqk = m.get(q, k);
                    m.set(p, k, c * apk - s * aqk);
                    m.set(q, k, s * apk + c * aqk);
                }
                m.set(p, q, T::zero());
                m.set(q, p, T::zero());
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let diag: Vec<f64> = (0..n).map(|i| m.get(i, i).to_f64_lossy().abs()).collect();
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    Err(LinalgError::EigenNoConvergence {
        sweeps: MAX_SWEEPS,
        off_norm: off_norm(&m).to_f64_lossy(),
        frobenius: fro.to_f64_lossy(),
        diag_min_abs: dmin,
        diag_max_abs: dmax,
        condition_estimate: if dmin > 0.0 { dmax / dmin } else { f64::INFINITY },
    })
}

/// `(A + shift·I)† v`, zeroing eigendirections with `|λ_i + shift| ≤ null_tol·scale`.
pub fn pinv_apply<T: Scalar>(s: &SpectralData<T>, shift: T, v: &[T]) -> Vec<T> {
    assert_eq!(v.len(), s.n(), "dimension mismatch");
    let cut = s.zero_threshold();
    let mut c = s.to_eigen(v);
    for (ci, &l) in c.iter_mut().zip(&s.eigvals) {
        let den = l + shift;
        *ci = if den.abs() <= cut { T::zero() } else { *ci / den };
    }
    s.from_eigen(&c)
}

/// `‖A‖₂ = max_i |λ_i|`.
pub fn spectral_norm<T: Scalar>(a: &SymMatrix<T>) -> T {
    // A decomposition failure only happens for pathological input; fall back to
    // the Frobenius norm, which bounds the spectral norm from above.
    match jacobi_eigen(a) {
        Ok((vals, _)) => vals.iter().fold(T::zero(), |m, &l| m.max(l.abs())),
        Err(_) => a.frobenius(),
    }
}

/// Splits `x` into its components in `Range(A − λ₁I)` and `Null(A − λ₁I)`.
pub fn range_null_split<T: Scalar>(s: &SpectralData<T>, x: &[T]) -> (Vec<T>, Vec<T>) {
    assert_eq!(x.len(), s.n(), "dimension mismatch");
    let mut null = vec![T::zero(); x.len()];
    for i in 0..s.k {
        let v = s.eigvec(i);
        axpy(dot(&v, x), &v, &mut null);
    }
    (sub(x, &null), null)
}

/// Coordinates of a vector's null-space component in the basis returned by
/// [`SpectralData::null_basis`].
pub fn null_coords<T: Scalar>(s: &SpectralData<T>, x: &[T]) -> Vec<T> {
    (0..s.k).map(|i| dot(&s.eigvec(i), x)).collect()
}
