//! Thin Householder QR.

use crate::dense::{dot, DenseMatrix};
use crate::error::{dim_mismatch, Result};
use crate::scalar::Scalar;

/// Thin QR `A = Q R` of a matrix with `rows >= cols`.
///
/// `Q` is `m x n` with orthonormal columns and `R` is `n x n` upper
/// triangular with a nonnegative diagonal, which makes the factorization
/// unique for full-column-rank input.
pub fn qr_thin<T: Scalar>(a: &DenseMatrix<T>) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
    let (m, n) = a.shape();
    if m < n {
        return Err(dim_mismatch("qr_thin", format!("rows >= cols ({n})"), m));
    }
    let mut work = a.clone();
    let mut reflectors: Vec<Vec<T>> = Vec::with_capacity(n);
    for k in 0..n {
        let x = &work.col(k)[k..];
        let norm = dot(x, x).sqrt();
        let mut v = x.to_vec();
        if norm > T::zero() {
            let alpha = if v[0] >= T::zero() { -norm } else { norm };
            v[0] -= alpha;
        }
        let vnorm_sq = dot(&v, &v);
        if vnorm_sq > T::zero() {
            for j in k..n {
                let col = &mut work.col_mut(j)[k..];
                let f = (dot(&v, col) + dot(&v, col)) / vnorm_sq;
                for (c, vi) in col.iter_mut().zip(&v) {
                    *c -= f * *vi;
                }
            }
        }
        reflectors.push(v);
    }

    let mut r = DenseMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            r[(i, j)] = work[(i, j)];
        }
    }

    // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of I.
    let mut q = DenseMatrix::zeros(m, n);
    for j in 0..n {
        q[(j, j)] = T::one();
    }
    for k in (0..n).rev() {
        let v = &reflectors[k];
        let vnorm_sq = dot(v, v);
        if vnorm_sq == T::zero() {
            continue;
        }
        for j in 0..n {
            let col = &mut q.col_mut(j)[k..];
            let f = (dot(v, col) + dot(v, col)) / vnorm_sq;
            for (c, vi) in col.iter_mut().zip(v) {
                *c -= f * *vi;
            }
        }
    }

    for i in 0..n {
        if r[(i, i)] < T::zero() {
            for j in i..n {
                r[(i, j)] = -r[(i, j)];
            }
            for x in q.col_mut(i) {
                *x = -*x;
            }
        }
    }
    Ok((q, r))
}
