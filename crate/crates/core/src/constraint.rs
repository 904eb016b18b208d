//! Subspace-constraint machinery for a fixed constraint row set.
//!
//! Given `A x = b` and row indices `I_p`, the iterates are kept on the
//! affine set `{x : A_Ip x = b_Ip}`. The projector `P = I - A_Ip^+ A_Ip`
//! onto `Null(A_Ip)` is applied as `v - V_p (V_p^T v)` where `V_p` is an
//! orthonormal basis of `Range(A_Ip^T)` taken from the truncated SVD of
//! `A_Ip`; `P` itself is never formed.

use serde::{Deserialize, Serialize};

use crate::dense::{dot, DenseMatrix, DenseVector};
use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{pinv_apply, svd_truncated, SvdFactors};
use crate::scalar::Scalar;

/// Relative residual tolerance for the consistency check of `A_Ip x = b_Ip`.
pub const SUBSYSTEM_CONSISTENCY_TOL: f64 = 1e-8;

/// [`SUBSYSTEM_CONSISTENCY_TOL`], loosened to `100 eps` for scalars too
/// coarse to reach it.
pub(crate) fn consistency_tol<T: Scalar>() -> T {
    T::lit(SUBSYSTEM_CONSISTENCY_TOL).max(T::lit(100.0) * T::epsilon())
}

/// Split of `{0, .., m-1}` into constraint rows `i_p` and remaining rows `i_r`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexPartition {
    i_p: Vec<usize>,
    i_r: Vec<usize>,
}

impl IndexPartition {
    /// Sorts and validates `i_p`; rejects duplicates and out-of-range rows.
    pub fn new(m: usize, i_p: &[usize]) -> Result<Self> {
        let mut sorted = i_p.to_vec();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidIndices(format!("row {} listed twice", w[0])));
        }
        if let Some(&bad) = sorted.last().filter(|&&i| i >= m) {
            return Err(Error::InvalidIndices(format!("row {bad} out of range for {m} rows")));
        }
        let mut mask = vec![false; m];
        for &i in &sorted {
            mask[i] = true;
        }
        let i_r = (0..m).filter(|&i| !mask[i]).collect();
        Ok(Self { i_p: sorted, i_r })
    }

    pub fn i_p(&self) -> &[usize] {
        &self.i_p
    }

    pub fn i_r(&self) -> &[usize] {
        &self.i_r
    }

    pub fn m(&self) -> usize {
        self.i_p.len() + self.i_r.len()
    }

    pub fn m_p(&self) -> usize {
        self.i_p.len()
    }

    pub fn m_r(&self) -> usize {
        self.i_r.len()
    }
}

/// Cached factorization of `A_Ip`.
#[derive(Clone, Debug)]
pub struct ConstraintFactor<T> {
    partition: IndexPartition,
    /// `n x r_p`, orthonormal basis of `Range(A_Ip^T)`.
    vp: DenseMatrix<T>,
    pinv_factors: SvdFactors<T>,
    x0: DenseVector<T>,
}

impl<T: Scalar> ConstraintFactor<T> {
    pub fn partition(&self) -> &IndexPartition {
        &self.partition
    }

    pub fn vp(&self) -> &DenseMatrix<T> {
        &self.vp
    }

    pub fn pinv_factors(&self) -> &SvdFactors<T> {
        &self.pinv_factors
    }

    /// `rank(A_Ip)`.
    pub fn r_p(&self) -> usize {
        self.vp.cols()
    }

    /// Feasible starting point `A_Ip^+ b_Ip`.
    pub fn x0(&self) -> &DenseVector<T> {
        &self.x0
    }

    pub fn n(&self) -> usize {
        self.vp.rows()
    }

    /// `P v = v - V_p (V_p^T v)`.
    pub fn apply_p(&self, v: &DenseVector<T>) -> Result<DenseVector<T>> {
        if v.len() != self.n() {
            return Err(dim_mismatch("apply_p", self.n(), v.len()));
        }
        let mut out = v.clone();
        self.apply_p_in_place(out.as_mut_slice());
        Ok(out)
    }

    pub(crate) fn apply_p_in_place(&self, v: &mut [T]) {
        for j in 0..self.vp.cols() {
            let col = self.vp.col(j);
            let c = dot(col, v);
            for (x, &b) in v.iter_mut().zip(col) {
                *x -= c * b;
            }
        }
    }

    /// Applies `P` to every row of `m` (i.e. returns `m P`).
    pub fn project_rows(&self, m: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if m.cols() != self.n() {
            return Err(dim_mismatch("project_rows", self.n(), m.cols()));
        }
        // m P = m - (m V_p) V_p^T
        let coeffs = m.matmul(&self.vp)?;
        m.sub(&coeffs.matmul(&self.vp.transpose())?)
    }

    /// `A_Ir P` for the full matrix `a`, flushed to exact zero when it is
    /// rounding noise, i.e. `||A_Ir P||_F <= rank_tol max(m, n) ||A||_F`.
    /// This happens when `I_p` already spans the row space, and a relative
    /// rank cutoff on the noise alone would report spurious singular values.
    pub fn reduced_matrix(&self, a: &DenseMatrix<T>, rank_tol: T) -> Result<DenseMatrix<T>> {
        if a.rows() != self.partition.m() {
            return Err(dim_mismatch("reduced_matrix", self.partition.m(), a.rows()));
        }
        let a_ir_p = self.project_rows(&a.select_rows(self.partition.i_r())?)?;
        let floor = rank_tol * T::from_usize_lossy(a.rows().max(a.cols())) * a.frobenius_norm();
        if a_ir_p.frobenius_norm() <= floor {
            return Ok(DenseMatrix::zeros(a_ir_p.rows(), a_ir_p.cols()));
        }
        Ok(a_ir_p)
    }

    /// `A_Ip^+ v` for `v` of length `m_p`.
    pub fn apply_pinv(&self, v: &DenseVector<T>) -> Result<DenseVector<T>> {
        pinv_apply(&self.pinv_factors, v)
    }
}

/// Builds the constraint factor for rows `i_p` of `(a, b)`.
///
/// An empty `i_p` gives the trivial factor with `P = I` and `x0 = 0`.
pub fn build_constraint<T: Scalar>(
    a: &DenseMatrix<T>,
    b: &DenseVector<T>,
    i_p: &[usize],
    rank_tol: T,
) -> Result<ConstraintFactor<T>> {
    if b.len() != a.rows() {
        return Err(dim_mismatch("build_constraint", a.rows(), b.len()));
    }
    let partition = IndexPartition::new(a.rows(), i_p)?;
    let a_ip = a.select_rows(partition.i_p())?;
    let b_ip = b.select(partition.i_p())?;
    let pinv_factors = svd_truncated(&a_ip, rank_tol)?;
    let x0 = pinv_apply(&pinv_factors, &b_ip)?;

    let residual = a_ip.matvec(&x0)?.sub(&b_ip).norm();
    let bound = consistency_tol::<T>() * b_ip.norm();
    if residual > bound {
        return Err(Error::InconsistentSubsystem {
            residual: residual.to_f64_lossy(),
            bound: bound.to_f64_lossy(),
        });
    }
    let vp = pinv_factors.v();
    Ok(ConstraintFactor {
        partition,
        vp,
        pinv_factors,
        x0,
    })
}

/// Block factorization `A = L Â` with `Â = (A_Ip; A_Ir P)` and
/// `L = (I 0; A_Ir A_Ip^+ I)`, plus the transformed right-hand side.
///
/// Rows are kept in the original order of `A`: row `i` of `Â` is `a_i` for
/// `i in I_p` and `P a_i` for `i in I_r`, and `L` is unit lower block
/// triangular after the permutation that lists `I_p` first.
#[derive(Clone, Debug)]
pub struct QrLikeFactorization<T> {
    pub a_hat: DenseMatrix<T>,
    pub l: DenseMatrix<T>,
    pub b_hat: DenseVector<T>,
}

impl<T: Scalar> QrLikeFactorization<T> {
    /// `A_Ir P` extracted from `a_hat`.
    pub fn a_ir_p(&self, partition: &IndexPartition) -> DenseMatrix<T> {
        self.a_hat
            .select_rows(partition.i_r())
            .expect("partition matches factorization")
    }

    /// `b̂_Ir = b_Ir - A_Ir A_Ip^+ b_Ip`.
    pub fn b_hat_ir(&self, partition: &IndexPartition) -> DenseVector<T> {
        self.b_hat
            .select(partition.i_r())
            .expect("partition matches factorization")
    }
}

pub fn qr_like_factorize<T: Scalar>(
    a: &DenseMatrix<T>,
    b: &DenseVector<T>,
    f: &ConstraintFactor<T>,
) -> Result<QrLikeFactorization<T>> {
    let part = f.partition();
    if a.rows() != part.m() || a.cols() != f.n() || b.len() != a.rows() {
        return Err(dim_mismatch(
            "qr_like_factorize",
            format!("{}x{} system", part.m(), f.n()),
            format!("{:?} with rhs {}", a.shape(), b.len()),
        ));
    }
    let m = a.rows();
    let a_ir = a.select_rows(part.i_r())?;
    let a_ir_p = f.project_rows(&a_ir)?;
    // Coupling block A_Ir A_Ip^+ (m_r x m_p).
    let coupling = a_ir.matmul(&f.pinv_factors().pinv_matrix())?;

    let mut a_hat = a.clone();
    for (k, &i) in part.i_r().iter().enumerate() {
        for j in 0..a.cols() {
            a_hat[(i, j)] = a_ir_p[(k, j)];
        }
    }
    let mut l = DenseMatrix::<T>::identity(m);
    for (k, &i) in part.i_r().iter().enumerate() {
        for (c, &jp) in part.i_p().iter().enumerate() {
            l[(i, jp)] = coupling[(k, c)];
        }
    }
    let correction = a_ir.matvec(f.x0())?;
    let mut b_hat = b.as_slice().to_vec();
    for (k, &i) in part.i_r().iter().enumerate() {
        b_hat[i] -= correction[k];
    }
    Ok(QrLikeFactorization {
        a_hat,
        l,
        b_hat: DenseVector::from_raw(b_hat),
    })
}

/// Least-norm solution assembled blockwise:
/// `A^+ b = A_Ip^+ b_Ip + (A_Ir P)^+ b̂_Ir`.
pub fn least_norm_via_blocks<T: Scalar>(
    a: &DenseMatrix<T>,
    b: &DenseVector<T>,
    f: &ConstraintFactor<T>,
    rank_tol: T,
) -> Result<DenseVector<T>> {
    let part = f.partition();
    if b.len() != a.rows() || a.rows() != part.m() {
        return Err(dim_mismatch("least_norm_via_blocks", part.m(), b.len()));
    }
    let a_ir = a.select_rows(part.i_r())?;
    let a_ir_p = f.reduced_matrix(a, rank_tol)?;
    let b_hat_ir = b.select(part.i_r())?.sub(&a_ir.matvec(f.x0())?);
    let reduced = svd_truncated(&a_ir_p, rank_tol)?;
    Ok(f.x0().add(&pinv_apply(&reduced, &b_hat_ir)?))
}

/// Outcome of comparing `[B; C]^+` with `[B^+, C^+]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StackedPinvReport {
    pub max_deviation: f64,
    pub frobenius_deviation: f64,
    pub scale: f64,
    pub pass: bool,
}

/// Relative tolerance for the stacked pseudoinverse comparison.
pub const STACKED_PINV_TOL: f64 = 1e-9;

/// Checks the block pseudoinverse identity for `B C^T = 0`.
pub fn stacked_pinv_check<T: Scalar>(
    b_mat: &DenseMatrix<T>,
    c_mat: &DenseMatrix<T>,
    rank_tol: T,
) -> Result<StackedPinvReport> {
    if b_mat.cols() != c_mat.cols() {
        return Err(dim_mismatch("stacked_pinv_check", b_mat.cols(), c_mat.cols()));
    }
    let cross = b_mat.matmul(&c_mat.transpose())?.frobenius_norm();
    let cross_bound = T::lit(1e-9) * b_mat.frobenius_norm() * c_mat.frobenius_norm();
    if cross > cross_bound {
        return Err(Error::Precondition(format!(
            "B C^T != 0: ||B C^T||_F = {:.3e}",
            cross.to_f64_lossy()
        )));
    }
    let stacked = svd_truncated(&b_mat.vstack(c_mat)?, rank_tol)?.pinv_matrix();
    let b_pinv = svd_truncated(b_mat, rank_tol)?.pinv_matrix();
    let c_pinv = svd_truncated(c_mat, rank_tol)?.pinv_matrix();
    let concat = b_pinv.hstack(&c_pinv)?;
    let diff = stacked.sub(&concat)?;
    let scale = stacked.frobenius_norm().max(T::one()).to_f64_lossy();
    let frob = diff.frobenius_norm().to_f64_lossy();
    Ok(StackedPinvReport {
        max_deviation: diff.max_abs().to_f64_lossy(),
        frobenius_deviation: frob,
        scale,
        pass: frob <= STACKED_PINV_TOL * scale,
    })
}
