//! Learned Mahalanobis frame distance: `D_A(x, y) = (x − y)ᵀ A (x − y)` for a
//! symmetric positive-definite `A`, the LogDet divergence that regularizes
//! its updates, and the closed-form regularized triplet update.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Maximum number of step-size halvings before an update is rejected.
pub const MAX_HALVINGS: usize = 20;

/// Symmetric tolerance accepted when constructing a metric from user input.
const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MahalanobisMetric<T> {
    a: Matrix<T>,
    #[serde(skip)]
    factor: OnceLock<Matrix<T>>,
}

impl<T: Real> PartialEq for MahalanobisMetric<T> {
    fn eq(&self, other: &Self) -> bool {
        self.a == other.a
    }
}

impl<T: Real> MahalanobisMetric<T> {
    /// Validates symmetry and positive definiteness; the stored matrix is
    /// exactly symmetrized.
    pub fn new(mut a: Matrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::shape("metric matrix must be square"));
        }
        if !a.is_finite() {
            return Err(Error::NonFinite("metric matrix".into()));
        }
        if a.asymmetry() > T::lit(SYMMETRY_TOL) {
            return Err(Error::invalid("metric matrix is not symmetric"));
        }
        a.symmetrize();
        a.cholesky()?;
        Ok(Self {
            a,
            factor: OnceLock::new(),
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            a: Matrix::identity(dim),
            factor: OnceLock::new(),
        }
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    /// Upper-triangular `G` with `A = GᵀG`, computed once.
    pub fn factor(&self) -> &Matrix<T> {
        self.factor.get_or_init(|| {
            factorize(&self.a).expect("metric invariant: matrix is positive definite")
        })
    }

    /// `G (x)`: maps a vector into the space where `D_A` is squared Euclidean.
    pub fn project(&self, x: &[T]) -> Result<Vec<T>> {
        self.factor().matvec(x)
    }

    pub fn distance(&self, x: &[T], y: &[T]) -> Result<T> {
        mahalanobis(self, x, y)
    }

    pub fn scaled(&self, c: T) -> Result<Self> {
        Self::new(self.a.scale(c))
    }
}

/// Squared Mahalanobis distance `(x − y)ᵀ A (x − y)`.
pub fn mahalanobis<T: Real>(metric: &MahalanobisMetric<T>, x: &[T], y: &[T]) -> Result<T> {
    if x.len() != metric.dim() || y.len() != metric.dim() {
        return Err(Error::shape(format!(
            "vectors of length {} and {} against a {}-dim metric",
            x.len(),
            y.len(),
            metric.dim()
        )));
    }
    let diff: Vec<T> = x.iter().zip(y).map(|(&p, &q)| p - q).collect();
    // Clamp rounding noise; the form is non-negative for PD A.
    Ok(metric.a.quadratic_form(&diff)?.max(T::zero()))
}

/// Cholesky-based factor `G` (upper triangular) with `GᵀG = A`.
pub fn factorize<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    if a.asymmetry() > T::lit(SYMMETRY_TOL) {
        return Err(Error::invalid("factorize needs a symmetric matrix"));
    }
    Ok(a.cholesky()?.transpose())
}

/// LogDet divergence `tr(A A_t⁻¹) − log det(A A_t⁻¹) − d`.
pub fn logdet_div<T: Real>(a: &Matrix<T>, a_t: &Matrix<T>) -> Result<T> {
    if a.rows() != a_t.rows() || !a.is_square() || !a_t.is_square() {
        return Err(Error::shape("logdet divergence needs two square matrices of equal size"));
    }
    let inv_t = a_t.spd_inverse()?;
    let trace = a.matmul(&inv_t)?.trace();
    let log_det = a.spd_log_det()? - a_t.spd_log_det()?;
    let d = T::from_len(a.rows());
    Ok((trace - log_det - d).max(T::zero()))
}

/// Triplet objective `ρ + D_A(x, y) − D_A(x, z)` on already-embedded vectors.
pub fn triplet_objective<T: Real>(
    metric: &MahalanobisMetric<T>,
    x: &[T],
    y: &[T],
    z: &[T],
    rho: T,
) -> Result<T> {
    Ok(rho + mahalanobis(metric, x, y)? - mahalanobis(metric, x, z)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateStatus {
    /// Update accepted after `halvings` reductions of the step size.
    Applied { halvings: usize },
    /// `u` and `v` coincide; the objective is flat and `A` is unchanged.
    NoOp,
    /// No step size kept `A` positive definite; `A` is unchanged.
    Rejected,
}

#[derive(Debug, Clone)]
pub struct MetricUpdate<T> {
    pub metric: MahalanobisMetric<T>,
    pub eta: T,
    pub status: UpdateStatus,
}

/// Minimizer of `D_ld(A, A_t) + η (ρ + uᵀAu − vᵀAv)` over PD matrices.
///
/// Stationarity gives `A⁻¹ = A_t⁻¹ + η (u uᵀ − v vᵀ)`, applied as two
/// Sherman–Morrison rank-one updates. When the result would leave the PD cone
/// `η` is halved, at most [`MAX_HALVINGS`] times; after that `A_t` is
/// returned with [`UpdateStatus::Rejected`].
pub fn update_metric<T: Real>(
    a_t: &MahalanobisMetric<T>,
    u: &[T],
    v: &[T],
    eta: T,
) -> Result<MetricUpdate<T>> {
    let d = a_t.dim();
    if u.len() != d || v.len() != d {
        return Err(Error::shape("update vectors must match metric dimension"));
    }
    if !(eta > T::zero()) {
        return Err(Error::invalid("eta must be positive"));
    }
    if u == v {
        return Ok(MetricUpdate {
            metric: a_t.clone(),
            eta,
            status: UpdateStatus::NoOp,
        });
    }
    let a = a_t.matrix();
    let au = a.matvec(u)?;
    let u_au: T = au.iter().zip(u).map(|(&p, &q)| p * q).sum();
    let mut step = eta;
    for halvings in 0..=MAX_HALVINGS {
        if let Some(next) = rank_two_step(a, &au, u_au, v, step)? {
            return Ok(MetricUpdate {
                metric: next,
                eta: step,
                status: UpdateStatus::Applied { halvings },
            });
        }
        step = step * T::lit(0.5);
    }
    log::warn!("metric update rejected after {MAX_HALVINGS} halvings");
    Ok(MetricUpdate {
        metric: a_t.clone(),
        eta: step,
        status: UpdateStatus::Rejected,
    })
}

fn rank_two_step<T: Real>(
    a: &Matrix<T>,
    au: &[T],
    u_au: T,
    v: &[T],
    eta: T,
) -> Result<Option<MahalanobisMetric<T>>> {
    let d = a.rows();
    // (A⁻¹ + η u uᵀ)⁻¹ = A − η (Au)(Au)ᵀ / (1 + η uᵀAu)
    let mut a1 = a.clone();
    let c1 = eta / (T::one() + eta * u_au);
    for i in 0..d {
        for j in 0..d {
            a1[(i, j)] -= c1 * au[i] * au[j];
        }
    }
    // (A1⁻¹ − η v vᵀ)⁻¹ = A1 + η (A1 v)(A1 v)ᵀ / (1 − η vᵀA1v)
    let a1v = a1.matvec(v)?;
    let v_a1v: T = a1v.iter().zip(v).map(|(&p, &q)| p * q).sum();
    let denom = T::one() - eta * v_a1v;
    if !(denom > T::epsilon()) {
        return Ok(None);
    }
    let c2 = eta / denom;
    let mut a2 = a1;
    for i in 0..d {
        for j in 0..d {
            a2[(i, j)] += c2 * a1v[i] * a1v[j];
        }
    }
    a2.symmetrize();
    if !a2.is_finite() || a2.cholesky().is_err() {
        return Ok(None);
    }
    Ok(Some(MahalanobisMetric {
        a: a2,
        factor: OnceLock::new(),
    }))
}
