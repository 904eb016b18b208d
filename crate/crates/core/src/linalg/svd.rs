//! Thin SVD by one-sided (Hestenes) Jacobi rotations, plus the
//! pseudoinverse helpers built on it.

use serde::{Deserialize, Serialize};

use crate::dense::{dot, DenseMatrix, DenseVector};
use crate::error::{dim_mismatch, Error, Result};
use crate::scalar::Scalar;

/// Default relative rank threshold: singular values at or below
/// `DEFAULT_RANK_TOL * max(m, n) * sigma_max` are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

const MAX_SWEEPS: usize = 80;

/// Truncated singular value decomposition `A = U diag(sigma) V^T` keeping
/// only the numerically nonzero singular values.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SvdFactors<T> {
    /// `m x r` with orthonormal columns.
    pub u: DenseMatrix<T>,
    /// Nonincreasing, strictly positive.
    pub sigma: Vec<T>,
    /// `r x n` with orthonormal rows.
    pub vt: DenseMatrix<T>,
}

impl<T: Scalar> SvdFactors<T> {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Row count of the factored matrix.
    pub fn rows(&self) -> usize {
        self.u.rows()
    }

    /// Column count of the factored matrix.
    pub fn cols(&self) -> usize {
        self.vt.cols()
    }

    /// Largest singular value, zero for the zero matrix.
    pub fn sigma_max(&self) -> T {
        self.sigma.first().copied().unwrap_or_else(T::zero)
    }

    /// Smallest retained (nonzero) singular value.
    pub fn sigma_min(&self) -> Option<T> {
        self.sigma.last().copied()
    }

    /// Right singular vectors as an `n x r` matrix.
    pub fn v(&self) -> DenseMatrix<T> {
        self.vt.transpose()
    }

    /// Rebuilds `U diag(sigma) V^T`.
    pub fn reconstruct(&self) -> DenseMatrix<T> {
        let mut us = self.u.clone();
        for (j, &s) in self.sigma.iter().enumerate() {
            for v in us.col_mut(j) {
                *v *= s;
            }
        }
        us.matmul(&self.vt).expect("factor shapes agree")
    }

    /// Explicit pseudoinverse `V diag(1/sigma) U^T` (`n x m`).
    pub fn pinv_matrix(&self) -> DenseMatrix<T> {
        let mut vs = self.v();
        for (j, &s) in self.sigma.iter().enumerate() {
            for v in vs.col_mut(j) {
                *v /= s;
            }
        }
        vs.matmul(&self.u.transpose()).expect("factor shapes agree")
    }
}

/// Full one-sided Jacobi on a matrix with `rows >= cols`.
///
/// Returns the rotated columns `W = A V` (whose norms are the singular
/// values) and the accumulated `V`.
fn hestenes<T: Scalar>(a: &DenseMatrix<T>) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
    let (m, n) = a.shape();
    debug_assert!(m >= n);
    let mut w = a.clone();
    let mut v = DenseMatrix::<T>::identity(n);
    let tol = T::epsilon() * T::from_usize_lossy(m.max(1)).sqrt();
    let tiny = T::min_positive_value();
    let mut norms: Vec<T> = (0..n).map(|j| dot(w.col(j), w.col(j))).collect();

    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = norms[p];
                let beta = norms[q];
                let gamma = dot(w.col(p), w.col(q));
                if gamma.abs() <= tol * (alpha * beta).sqrt() || gamma.abs() < tiny {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + T::one().hypot(zeta));
                let c = T::one() / T::one().hypot(t);
                let s = c * t;
                rotate_cols(&mut w, p, q, c, s);
                rotate_cols(&mut v, p, q, c, s);
                norms[p] = dot(w.col(p), w.col(p));
                norms[q] = dot(w.col(q), w.col(q));
            }
        }
        if !rotated {
            return Ok((w, v));
        }
    }
    Err(Error::NoConvergence {
        rows: a.rows(),
        cols: a.cols(),
        sweeps: MAX_SWEEPS,
    })
}

fn rotate_cols<T: Scalar>(m: &mut DenseMatrix<T>, p: usize, q: usize, c: T, s: T) {
    let (cp, cq) = m.two_cols_mut(p, q);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Full decomposition of an arbitrary matrix: `(U, sigma, V)` with all
/// `min(m, n)` singular values, sorted nonincreasing.
fn full_svd<T: Scalar>(a: &DenseMatrix<T>) -> Result<(DenseMatrix<T>, Vec<T>, DenseMatrix<T>)> {
    let (m, n) = a.shape();
    let transposed = m < n;
    let work = if transposed { a.transpose() } else { a.clone() };
    let (w, v) = hestenes(&work)?;
    let k = work.cols();
    let mut order: Vec<(T, usize)> = (0..k).map(|j| (dot(w.col(j), w.col(j)).sqrt(), j)).collect();
    // Stable sort keeps ties in column order.
    order.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal));
    let sigma: Vec<T> = order.iter().map(|o| o.0).collect();
    let perm: Vec<usize> = order.iter().map(|o| o.1).collect();
    let left = w.select_cols(&perm)?;
    let right = v.select_cols(&perm)?;
    if transposed {
        Ok((right, sigma, left))
    } else {
        Ok((left, sigma, right))
    }
}

/// All `min(m, n)` singular values of `a` in nonincreasing order, zeros
/// included.
pub fn singular_values<T: Scalar>(a: &DenseMatrix<T>) -> Result<Vec<T>> {
    if a.is_empty() {
        return Ok(Vec::new());
    }
    Ok(full_svd(a)?.1)
}

/// Truncated SVD retaining `sigma_i > rank_tol * max(m, n) * sigma_1`.
///
/// The zero matrix (and any empty matrix) yields rank 0 with empty factors.
pub fn svd_truncated<T: Scalar>(a: &DenseMatrix<T>, rank_tol: T) -> Result<SvdFactors<T>> {
    let (m, n) = a.shape();
    if a.is_empty() || a.max_abs() == T::zero() {
        return Ok(SvdFactors {
            u: DenseMatrix::zeros(m, 0),
            sigma: Vec::new(),
            vt: DenseMatrix::zeros(0, n),
        });
    }
    let (left, sigma, right) = full_svd(a)?;
    let cutoff = rank_tol * T::from_usize_lossy(m.max(n)) * sigma[0];
    let r = sigma.iter().take_while(|&&s| s > cutoff).count();
    let keep: Vec<usize> = (0..r).collect();
    let mut u = left.select_cols(&keep)?;
    let mut v = right.select_cols(&keep)?;
    // Jacobi leaves one side as `A v_j = sigma_j u_j` unnormalized: the left
    // factor for tall input, the right factor for wide input.
    let scaled = if m >= n { &mut u } else { &mut v };
    for (j, &s) in sigma.iter().take(r).enumerate() {
        for x in scaled.col_mut(j) {
            *x /= s;
        }
    }
    Ok(SvdFactors {
        u,
        sigma: sigma[..r].to_vec(),
        vt: v.transpose(),
    })
}

/// Applies `A^+ v = V diag(1/sigma) U^T v`.
pub fn pinv_apply<T: Scalar>(f: &SvdFactors<T>, v: &DenseVector<T>) -> Result<DenseVector<T>> {
    if v.len() != f.rows() {
        return Err(dim_mismatch("pinv_apply", f.rows(), v.len()));
    }
    let coeffs: Vec<T> = (0..f.rank())
        .map(|i| dot(f.u.col(i), v.as_slice()) / f.sigma[i])
        .collect();
    Ok(DenseVector::from_raw(
        (0..f.cols()).map(|j| dot(f.vt.col(j), &coeffs)).collect(),
    ))
}

/// Minimum-norm least-squares solution `A^+ b`.
pub fn pinv_solve_least_norm<T: Scalar>(
    a: &DenseMatrix<T>,
    b: &DenseVector<T>,
    rank_tol: T,
) -> Result<DenseVector<T>> {
    if b.len() != a.rows() {
        return Err(dim_mismatch("pinv_solve_least_norm", a.rows(), b.len()));
    }
    let f = svd_truncated(a, rank_tol)?;
    pinv_apply(&f, b)
}

/// Explicit pseudoinverse of `a`.
pub fn pinv<T: Scalar>(a: &DenseMatrix<T>, rank_tol: T) -> Result<DenseMatrix<T>> {
    Ok(svd_truncated(a, rank_tol)?.pinv_matrix())
}
