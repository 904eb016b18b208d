//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use crate::dense::DenseMatrix;
use crate::error::{dim_mismatch, Error, Result};
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 60;

fn is_diagonal<T: Scalar>(a: &DenseMatrix<T>) -> bool {
    let n = a.rows();
    (0..n).all(|j| (0..n).all(|i| i == j || a[(i, j)] == T::zero()))
}

/// Eigenvalues (ascending) and orthonormal eigenvectors (as columns) of a
/// symmetric matrix. Only the lower triangle's symmetric part is trusted.
pub fn sym_eigen<T: Scalar>(a: &DenseMatrix<T>) -> Result<(Vec<T>, DenseMatrix<T>)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(dim_mismatch("sym_eigen", "square", format!("{:?}", a.shape())));
    }
    let half = T::lit(0.5);
    let mut w = DenseMatrix::from_fn(n, n, |i, j| half * (a[(i, j)] + a[(j, i)]));
    let mut v = DenseMatrix::<T>::identity(n);

    if !is_diagonal(&w) {
        let mut converged = false;
        for _ in 0..MAX_SWEEPS {
            let off: T = (0..n)
                .flat_map(|j| (0..n).filter(move |&i| i != j).map(move |i| (i, j)))
                .map(|(i, j)| w[(i, j)] * w[(i, j)])
                .sum();
            let diag: T = (0..n).map(|i| w[(i, i)] * w[(i, i)]).sum();
            if off <= T::epsilon() * T::epsilon() * diag || off == T::zero() {
                converged = true;
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = w[(p, q)];
                    if apq == T::zero() {
                        continue;
                    }
                    let theta = (w[(q, q)] - w[(p, p)]) / (apq + apq);
                    let t = theta.signum() / (theta.abs() + T::one().hypot(theta));
                    let c = T::one() / T::one().hypot(t);
                    let s = t * c;
                    // W <- J^T W J with J the (p, q) rotation.
                    for k in 0..n {
                        let wkp = w[(k, p)];
                        let wkq = w[(k, q)];
                        w[(k, p)] = c * wkp - s * wkq;
                        w[(k, q)] = s * wkp + c * wkq;
                    }
                    for k in 0..n {
                        let wpk = w[(p, k)];
                        let wqk = w[(q, k)];
                        w[(p, k)] = c * wpk - s * wqk;
                        w[(q, k)] = s * wpk + c * wqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                rows: n,
                cols: n,
                sweeps: MAX_SWEEPS,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        w[(i, i)]
            .partial_cmp(&w[(j, j)])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| w[(i, i)]).collect();
    Ok((values, v.select_cols(&order)?))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn sym_lambda_min<T: Scalar>(a: &DenseMatrix<T>) -> Result<T> {
    let (vals, _) = sym_eigen(a)?;
    vals.first()
        .copied()
        .ok_or(Error::Empty("sym_lambda_min on a 0x0 matrix"))
}

/// Principal square root of a symmetric positive semidefinite matrix.
/// Eigenvalues below zero (rounding) are clamped to zero.
pub fn sym_sqrt<T: Scalar>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let n = a.rows();
    if a.cols() == n && is_diagonal(a) {
        return Ok(DenseMatrix::from_fn(n, n, |i, j| {
            if i == j {
                a[(i, i)].max(T::zero()).sqrt()
            } else {
                T::zero()
            }
        }));
    }
    let (vals, vecs) = sym_eigen(a)?;
    let mut scaled = vecs.clone();
    for (j, &lam) in vals.iter().enumerate() {
        let s = lam.max(T::zero()).sqrt();
        for x in scaled.col_mut(j) {
            *x *= s;
        }
    }
    scaled.matmul(&vecs.transpose())
}
