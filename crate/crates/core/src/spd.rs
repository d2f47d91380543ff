//! Affine-invariant geometry on the manifold of symmetric positive-definite
//! matrices.
//!
//! Covariance matrices are compared with the affine-invariant distance
//!
//! ```text
//! δ(A, B) = ‖log(A^{-1/2} B A^{-1/2})‖_F = sqrt(Σ log² λᵢ(A⁻¹B))
//! ```
//!
//! which is invariant under congruence (`A ↦ W A Wᵀ`) and inversion. Averages
//! are weighted Karcher (Fréchet) means computed by fixed-point iteration in
//! the tangent space.
//!
//! All functions here are pure; [`SpdMatrix`] is an immutable value.

use std::cmp::Ordering;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum tolerated `|a_ij - a_ji|` for a matrix to be accepted as symmetric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Matrices whose smallest eigenvalue falls below this fraction of the
/// largest are rejected as numerically singular.
pub const CONDITION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpdError {
    #[error("matrix must be square and non-empty, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix contains a non-finite entry")]
    NonFinite,
    #[error("matrix is not symmetric: max |a_ij - a_ji| = {asymmetry:e}")]
    NotSymmetric { asymmetry: f64 },
    #[error(
        "matrix is not positive definite: smallest eigenvalue {min_eigenvalue:e}, largest {max_eigenvalue:e}"
    )]
    NotPositiveDefinite {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("geodesic parameter {0} is outside [0, 1]")]
    ParameterOutOfRange(f64),
    #[error("cannot average an empty set of matrices")]
    EmptySet,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("Karcher mean did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        last: Box<SpdMatrix>,
    },
}

/// A symmetric positive-definite matrix.
///
/// The invariants (square, finite, symmetric within [`SYMMETRY_TOLERANCE`],
/// smallest eigenvalue above [`CONDITION_FLOOR`] times the largest) are checked
/// once at construction. The stored matrix is exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    inner: DMatrix<f64>,
}

impl SpdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, SpdError> {
        let (rows, cols) = m.shape();
        if rows != cols || rows == 0 {
            return Err(SpdError::NotSquare { rows, cols });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(SpdError::NonFinite);
        }
        let asymmetry = max_asymmetry(&m);
        if asymmetry > SYMMETRY_TOLERANCE {
            return Err(SpdError::NotSymmetric { asymmetry });
        }
        let inner = symmetrize(m);
        let eig = SymmetricEigen::new(inner.clone());
        let (min_eigenvalue, max_eigenvalue) = extremes(eig.eigenvalues.as_slice());
        if !(min_eigenvalue > 0.0) || min_eigenvalue < CONDITION_FLOOR * max_eigenvalue {
            return Err(SpdError::NotPositiveDefinite {
                min_eigenvalue,
                max_eigenvalue,
            });
        }
        Ok(Self { inner })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            inner: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self, SpdError> {
        let n = diag.len();
        Self::new(DMatrix::from_fn(
            n,
            n,
            |i, j| if i == j { diag[i] } else { 0.0 },
        ))
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_slice(dim: usize, entries: &[f64]) -> Result<Self, SpdError> {
        if entries.len() != dim * dim {
            return Err(SpdError::NotSquare {
                rows: dim,
                cols: entries.len().checked_div(dim).unwrap_or(0),
            });
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| self.inner[(i, j)])
            .collect()
    }

    pub fn trace(&self) -> f64 {
        self.inner.trace()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.inner.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn sqrt(&self) -> DMatrix<f64> {
        spectral_map(&self.inner, f64::sqrt)
    }

    pub fn inv_sqrt(&self) -> DMatrix<f64> {
        spectral_map(&self.inner, |v| 1.0 / v.sqrt())
    }

    /// Principal matrix logarithm; a symmetric (not necessarily definite) matrix.
    pub fn log(&self) -> DMatrix<f64> {
        spectral_map(&self.inner, f64::ln)
    }

    pub fn powf(&self, t: f64) -> Result<Self, SpdError> {
        Self::new(spectral_map(&self.inner, |v| v.powf(t)))
    }

    pub fn inverse(&self) -> Result<Self, SpdError> {
        Self::new(spectral_map(&self.inner, f64::recip))
    }

    /// Matrix exponential of a symmetric matrix, which is always SPD.
    pub fn exp_symmetric(sym: &DMatrix<f64>) -> Result<Self, SpdError> {
        Self::new(spectral_map(&symmetrize(sym.clone()), f64::exp))
    }

    /// `W A Wᵀ` for an arbitrary `W` with matching column count.
    pub fn congruence(&self, w: &DMatrix<f64>) -> Result<Self, SpdError> {
        if w.ncols() != self.dim() {
            return Err(SpdError::DimensionMismatch {
                left: w.ncols(),
                right: self.dim(),
            });
        }
        Self::new(symmetrize(w * &self.inner * w.transpose()))
    }

    /// Multiplies every entry by a positive scalar.
    pub fn scaled(&self, factor: f64) -> Result<Self, SpdError> {
        Self::new(&self.inner * factor)
    }

    pub fn check_dim(&self, other: &Self) -> Result<(), SpdError> {
        if self.dim() != other.dim() {
            return Err(SpdError::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(())
    }

    fn lexicographic_cmp(&self, other: &Self) -> Ordering {
        self.inner
            .as_slice()
            .iter()
            .zip(other.inner.as_slice())
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

impl TryFrom<DMatrix<f64>> for SpdMatrix {
    type Error = SpdError;

    fn try_from(m: DMatrix<f64>) -> Result<Self, Self::Error> {
        Self::new(m)
    }
}

impl From<SpdMatrix> for DMatrix<f64> {
    fn from(m: SpdMatrix) -> Self {
        m.inner
    }
}

/// Affine-invariant Riemannian distance.
///
/// The arguments are put in a canonical order before evaluation, so the result
/// is bitwise symmetric, and identical inputs give exactly zero.
pub fn riemannian_distance(a: &SpdMatrix, b: &SpdMatrix) -> Result<f64, SpdError> {
    a.check_dim(b)?;
    let (first, second) = match a.lexicographic_cmp(b) {
        Ordering::Equal => return Ok(0.0),
        Ordering::Less => (a, b),
        Ordering::Greater => (b, a),
    };
    let isqrt = first.inv_sqrt();
    let whitened = symmetrize(&isqrt * second.as_matrix() * &isqrt);
    let mut ev: Vec<f64> = SymmetricEigen::new(whitened)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev.iter().map(|l| l.ln().powi(2)).sum::<f64>().sqrt())
}

/// Point at fraction `t` along the geodesic from `a` to `b`:
/// `A^{1/2} (A^{-1/2} B A^{-1/2})^t A^{1/2}`. The endpoints are returned as-is.
pub fn geodesic(a: &SpdMatrix, b: &SpdMatrix, t: f64) -> Result<SpdMatrix, SpdError> {
    a.check_dim(b)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(SpdError::ParameterOutOfRange(t));
    }
    if t == 0.0 {
        return Ok(a.clone());
    }
    if t == 1.0 {
        return Ok(b.clone());
    }
    let (sqrt, isqrt) = sqrt_pair(a.as_matrix());
    let whitened = symmetrize(&isqrt * b.as_matrix() * &isqrt);
    let stepped = spectral_map(&whitened, |v| v.powf(t));
    SpdMatrix::new(symmetrize(&sqrt * stepped * &sqrt))
}

/// Stopping rule for [`frechet_mean`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KarcherOptions {
    /// Frobenius norm of the tangent-space average below which iteration stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KarcherOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
        }
    }
}

/// Weighted Karcher mean.
///
/// Starts from the weighted arithmetic mean and iterates
/// `X ← X^{1/2} exp(Σ wᵢ log(X^{-1/2} Mᵢ X^{-1/2})) X^{1/2}` with unit step.
/// Weights are normalized internally. When every positively weighted matrix
/// is identical, that matrix is returned unchanged.
pub fn frechet_mean(
    matrices: &[SpdMatrix],
    weights: &[f64],
    opts: &KarcherOptions,
) -> Result<SpdMatrix, SpdError> {
    let first = matrices.first().ok_or(SpdError::EmptySet)?;
    if weights.len() != matrices.len() {
        return Err(SpdError::InvalidWeights(format!(
            "{} weights for {} matrices",
            weights.len(),
            matrices.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(SpdError::InvalidWeights(
            "weights must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(SpdError::InvalidWeights("weights sum to zero".into()));
    }
    for m in matrices {
        first.check_dim(m)?;
    }

    let points: Vec<(&SpdMatrix, f64)> = matrices
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(m, w)| (m, w / total))
        .collect();
    if points.iter().all(|(m, _)| *m == points[0].0) {
        return Ok(points[0].0.clone());
    }

    let n = first.dim();
    let mut current = points
        .iter()
        .fold(DMatrix::zeros(n, n), |acc, (m, w)| acc + m.as_matrix() * *w);
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let (sqrt, isqrt) = sqrt_pair(&current);
        let tangent = points.iter().fold(DMatrix::zeros(n, n), |acc, (m, w)| {
            let whitened = symmetrize(&isqrt * m.as_matrix() * &isqrt);
            acc + spectral_map(&whitened, f64::ln) * *w
        });
        residual = tangent.norm();
        current = symmetrize(&sqrt * spectral_map(&tangent, f64::exp) * &sqrt);
        if residual < opts.tol {
            return SpdMatrix::new(current);
        }
    }
    Err(SpdError::NotConverged {
        iterations: opts.max_iter,
        residual,
        last: Box::new(SpdMatrix::new(current)?),
    })
}

/// Unweighted Karcher mean with default options.
pub fn mean(matrices: &[SpdMatrix]) -> Result<SpdMatrix, SpdError> {
    frechet_mean(
        matrices,
        &vec![1.0; matrices.len()],
        &KarcherOptions::default(),
    )
}

/// `V f(Λ) Vᵀ` for a symmetric matrix.
pub(crate) fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mapped = eig.eigenvalues.map(f);
    let v = &eig.eigenvectors;
    symmetrize(v * DMatrix::from_diagonal(&mapped) * v.transpose())
}

fn sqrt_pair(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let v = &eig.eigenvectors;
    let vt = v.transpose();
    let s = eig.eigenvalues.map(f64::sqrt);
    let is = s.map(f64::recip);
    (
        symmetrize(v * DMatrix::from_diagonal(&s) * &vt),
        symmetrize(v * DMatrix::from_diagonal(&is) * &vt),
    )
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn extremes(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}
