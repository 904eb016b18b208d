//! Exact convergence-rate quantities for finite sketch spaces and numerical
//! checks of the accompanying inequalities.
//!
//! `sigma_min` always means the smallest nonzero singular value, with rank
//! decided by [`svd_truncated`].

use serde::{Deserialize, Serialize};

use crate::constraint::build_constraint;
use crate::dense::{DenseMatrix, DenseVector};
use crate::error::{Error, Result};
use crate::linalg::{singular_values, svd_truncated, sym_lambda_min, sym_sqrt};
use crate::sampling::{expectation_is_positive_definite, PartitionSpace, SketchDraw, SketchSpace};
use crate::scalar::Scalar;

/// Slack for `rho <= rho_tilde`.
pub const RATE_COMPARISON_SLACK: f64 = 1e-12;
/// Slack for the surrogate lower bound.
pub const SURROGATE_SLACK: f64 = 1e-10;
/// Absolute slack for the interlacing inequalities.
pub const INTERLACING_SLACK: f64 = 1e-8;

/// The two expectation matrices of a finite sketch space.
#[derive(Clone, Debug)]
pub struct HMatrices<T> {
    /// `E[S S^T / ||S^T A_Ir P||_2^2]`.
    pub h: DenseMatrix<T>,
    /// `E[S S^T / ||S||_2^2]`.
    pub h_bar: DenseMatrix<T>,
    /// Atoms with positive probability whose `S^T A_Ir P` vanishes while
    /// `S != 0`; they contribute zero to `H` under the `0/0 = 0` rule.
    pub degenerate_atoms: usize,
}

fn spectral_norm<T: Scalar>(m: &DenseMatrix<T>) -> Result<T> {
    if m.is_empty() {
        return Ok(T::zero());
    }
    Ok(singular_values(m)?.first().copied().unwrap_or_else(T::zero))
}

fn add_scaled_sst<T: Scalar>(acc: &mut DenseMatrix<T>, draw: &SketchDraw<'_, T>, weight: T) -> Result<()> {
    match draw.indices() {
        Some(ix) => {
            for &i in ix {
                acc[(i, i)] += weight;
            }
        }
        None => {
            let s = draw.to_dense(acc.rows());
            let sst = s.matmul(&s.transpose())?;
            let n = acc.rows();
            for j in 0..n {
                for i in 0..n {
                    acc[(i, j)] += weight * sst[(i, j)];
                }
            }
        }
    }
    Ok(())
}

/// Sums `H` and `H-bar` over the atoms of `space`, in atom order.
pub fn compute_h_matrices<T: Scalar, S: SketchSpace<T> + ?Sized>(
    space: &S,
    a_ir_p: &DenseMatrix<T>,
) -> Result<HMatrices<T>> {
    let m_r = space.dim();
    if a_ir_p.rows() != m_r {
        return Err(crate::error::dim_mismatch("compute_h_matrices", m_r, a_ir_p.rows()));
    }
    let mut h = DenseMatrix::zeros(m_r, m_r);
    let mut h_bar = DenseMatrix::zeros(m_r, m_r);
    let mut degenerate_atoms = 0;
    for (draw, p) in space.atoms()? {
        if draw.width() == 0 || p == 0.0 {
            continue;
        }
        let (st_a, s_norm) = match draw.indices() {
            Some(ix) => (a_ir_p.select_rows(ix)?, T::one()),
            None => {
                let s = draw.to_dense(m_r);
                (s.tr_matmul(a_ir_p)?, spectral_norm(&s)?)
            }
        };
        let p = T::lit(p);
        if s_norm > T::zero() {
            add_scaled_sst(&mut h_bar, &draw, p / (s_norm * s_norm))?;
        }
        let sa = spectral_norm(&st_a)?;
        if sa > T::zero() {
            add_scaled_sst(&mut h, &draw, p / (sa * sa))?;
        } else if s_norm > T::zero() {
            degenerate_atoms += 1;
        }
    }
    Ok(HMatrices { h, h_bar, degenerate_atoms })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub zeta: f64,
    /// `rank(A_Ir P)`.
    pub rank: usize,
    /// `sigma_min(H^{1/2} A_Ir P)`.
    pub sigma_min_h_half: Option<f64>,
    /// `1 - zeta (2 - zeta) sigma_min(H^{1/2} A_Ir P)^2`.
    pub rho: Option<f64>,
    /// The same factor for the unconstrained problem, when computed.
    pub rho_tilde: Option<f64>,
    /// `lambda_min(H-bar) sigma_min(A_Ir P) / ||A_Ir P||_F`.
    pub surrogate_lower_bound: Option<f64>,
    /// `||A_Ir P||_F / sigma_min(A_Ir P)`.
    pub kappa_scaled: Option<f64>,
    pub degenerate_atoms: usize,
    /// Why `rho` is missing, if it is.
    pub undefined_reason: Option<String>,
}

fn sigma_min_nonzero<T: Scalar>(m: &DenseMatrix<T>, rank_tol: T) -> Result<Option<(T, usize)>> {
    let f = svd_truncated(m, rank_tol)?;
    Ok(f.sigma_min().map(|s| (s, f.rank())))
}

/// `sigma_min(H^{1/2} A_Ir P)` and `rho = 1 - zeta (2 - zeta) sigma^2`.
///
/// Returns `Undefined` when `A_Ir P = 0`.
pub fn compute_rho<T: Scalar>(h: &DenseMatrix<T>, a_ir_p: &DenseMatrix<T>, zeta: f64, rank_tol: T) -> Result<(T, T)> {
    if !(zeta > 0.0 && zeta < 2.0) {
        return Err(Error::InvalidParameter(format!("zeta = {zeta} is not in (0, 2)")));
    }
    let root = sym_sqrt(h)?;
    let m = root.matmul(a_ir_p)?;
    let (s, _) = sigma_min_nonzero(&m, rank_tol)?
        .ok_or_else(|| Error::Undefined("A_Ir P is zero, so rho is undefined".into()))?;
    let z = T::lit(zeta);
    Ok((s, T::one() - z * (T::lit(2.0) - z) * s * s))
}

/// Full rate report for `space` acting on `A_Ir P`.
pub fn rate_report<T: Scalar, S: SketchSpace<T> + ?Sized>(
    space: &S,
    a_ir_p: &DenseMatrix<T>,
    zeta: f64,
    rank_tol: T,
) -> Result<RateReport> {
    let hm = compute_h_matrices(space, a_ir_p)?;
    let mut report = RateReport {
        zeta,
        rank: 0,
        sigma_min_h_half: None,
        rho: None,
        rho_tilde: None,
        surrogate_lower_bound: None,
        kappa_scaled: None,
        degenerate_atoms: hm.degenerate_atoms,
        undefined_reason: None,
    };
    let Some((s_min, rank)) = sigma_min_nonzero(a_ir_p, rank_tol)? else {
        report.undefined_reason = Some("A_Ir P is zero".into());
        return Ok(report);
    };
    report.rank = rank;
    let fro = a_ir_p.frobenius_norm();
    report.kappa_scaled = Some((fro / s_min).to_f64_lossy());
    report.surrogate_lower_bound = Some((sym_lambda_min(&hm.h_bar)? * s_min / fro).to_f64_lossy());
    if !expectation_is_positive_definite(space, T::lit(1e-12))? {
        report.undefined_reason = Some("E[S S^T] is not positive definite".into());
        return Ok(report);
    }
    let (s, rho) = compute_rho(&hm.h, a_ir_p, zeta, rank_tol)?;
    report.sigma_min_h_half = Some(s.to_f64_lossy());
    report.rho = Some(rho.to_f64_lossy());
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateComparison {
    pub rho: Option<f64>,
    pub rho_tilde: f64,
    /// `None` when the comparison was skipped.
    pub pass: Option<bool>,
    pub skipped: Option<String>,
}

/// Compares the constrained factor `rho` with the unconstrained `rho_tilde`
/// for block-indicator sketches.
///
/// `blocks` must partition `[m]` and `i_p` must be a union of blocks. Block
/// probabilities follow the Frobenius rule on `A`; the constrained space is
/// the restriction of each block to `I_r` with the same probability, so the
/// blocks lying in `I_p` become zero sketches.
pub fn compare_rates<T: Scalar>(
    a: &DenseMatrix<T>,
    i_p: &[usize],
    blocks: &[Vec<usize>],
    zeta: f64,
    rank_tol: T,
) -> Result<RateComparison> {
    let m = a.rows();
    let mut owner = vec![usize::MAX; m];
    for (bi, b) in blocks.iter().enumerate() {
        for &i in b {
            if i >= m || owner[i] != usize::MAX {
                return Err(Error::InvalidIndices(format!("blocks do not partition [{m}] (row {i})")));
            }
            owner[i] = bi;
        }
    }
    if owner.contains(&usize::MAX) {
        return Err(Error::InvalidIndices(format!("blocks do not cover [{m}]")));
    }
    let full = PartitionSpace::with_frobenius_probs(a, blocks.to_vec())?;
    let h_tilde = compute_h_matrices(&full, a)?.h;
    let (_, rho_tilde) = compute_rho(&h_tilde, a, zeta, rank_tol)?;

    let b = DenseVector::zeros(m);
    let factor = build_constraint(a, &b, i_p, rank_tol)?;
    let part = factor.partition();
    let mut in_p = vec![false; m];
    for &i in part.i_p() {
        in_p[i] = true;
    }
    for bl in blocks {
        if bl.iter().any(|&i| in_p[i]) && !bl.iter().all(|&i| in_p[i]) {
            return Err(Error::InvalidIndices("I_p must be a union of blocks".into()));
        }
    }
    let mut local = vec![usize::MAX; m];
    for (k, &i) in part.i_r().iter().enumerate() {
        local[i] = k;
    }
    let induced: Vec<Vec<usize>> = blocks
        .iter()
        .map(|bl| bl.iter().filter(|&&i| !in_p[i]).map(|&i| local[i]).collect())
        .collect();
    let space = PartitionSpace::from_blocks(part.m_r(), induced, full.probs().to_vec())?;
    let rho_tilde = rho_tilde.to_f64_lossy();
    if part.m_r() == 0 || !expectation_is_positive_definite::<T, _>(&space, T::lit(1e-12))? {
        return Ok(RateComparison {
            rho: None,
            rho_tilde,
            pass: None,
            skipped: Some("induced space violates E[S S^T] > 0".into()),
        });
    }
    let a_ir_p = factor.reduced_matrix(a, rank_tol)?;
    let h = compute_h_matrices(&space, &a_ir_p)?.h;
    match compute_rho(&h, &a_ir_p, zeta, rank_tol) {
        Ok((_, rho)) => {
            let rho = rho.to_f64_lossy();
            Ok(RateComparison {
                rho: Some(rho),
                rho_tilde,
                pass: Some(rho <= rho_tilde + RATE_COMPARISON_SLACK),
                skipped: None,
            })
        }
        Err(Error::Undefined(why)) => Ok(RateComparison { rho: None, rho_tilde, pass: None, skipped: Some(why) }),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterlacingReport {
    /// All `n` singular values of `A` (zero-padded), nonincreasing.
    pub sigma_a: Vec<f64>,
    /// All `n` singular values of `A_Ir P` (zero-padded), nonincreasing.
    pub sigma_ir_p: Vec<f64>,
    pub rank_a: usize,
    pub rank_ip: usize,
    pub rank_ir_p: usize,
    /// Largest amount by which an inequality is violated (0 if none).
    pub max_violation: f64,
    pub rank_additive: bool,
    pub pass: bool,
}

fn padded_singular_values<T: Scalar>(m: &DenseMatrix<T>, n: usize) -> Result<Vec<f64>> {
    let mut s: Vec<f64> = singular_values(m)?.iter().map(|v| v.to_f64_lossy()).collect();
    s.resize(n, 0.0);
    Ok(s)
}

/// Checks `sigma_{i + r_p}(A) <= sigma_i(A_Ir P) <= sigma_i(A)` for every `i`
/// and `rank(A_Ir P) = rank(A) - rank(A_Ip)`.
pub fn verify_interlacing<T: Scalar>(a: &DenseMatrix<T>, i_p: &[usize], rank_tol: T) -> Result<InterlacingReport> {
    let n = a.cols();
    let factor = build_constraint(a, &DenseVector::zeros(a.rows()), i_p, rank_tol)?;
    let part = factor.partition();
    let a_ir_p = factor.project_rows(&a.select_rows(part.i_r())?)?;
    let sigma_a = padded_singular_values(a, n)?;
    let sigma_ir_p = padded_singular_values(&a_ir_p, n)?;
    let r_p = factor.r_p();
    let mut max_violation: f64 = 0.0;
    for i in 0..n {
        max_violation = max_violation.max(sigma_ir_p[i] - sigma_a[i]);
        let lower = sigma_a.get(i + r_p).copied().unwrap_or(0.0);
        max_violation = max_violation.max(lower - sigma_ir_p[i]);
    }
    // Both ranks use A's scale, so a numerically zero A_Ir P has rank 0.
    let cutoff = rank_tol.to_f64_lossy() * a.rows().max(n) as f64 * sigma_a.first().copied().unwrap_or(0.0);
    let rank_a = sigma_a.iter().filter(|&&s| s > cutoff).count();
    let rank_ir_p = sigma_ir_p.iter().filter(|&&s| s > cutoff).count();
    let rank_additive = rank_ir_p + r_p == rank_a;
    Ok(InterlacingReport {
        sigma_a,
        sigma_ir_p,
        rank_a,
        rank_ip: r_p,
        rank_ir_p,
        max_violation,
        rank_additive,
        pass: max_violation <= INTERLACING_SLACK && rank_additive,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    /// `sigma_min(H^{1/2} A_Ir P)`.
    pub lhs: f64,
    /// `lambda_min(H-bar) sigma_min(A_Ir P) / ||A_Ir P||_F`.
    pub rhs: f64,
    pub pass: bool,
}

/// Checks `sigma_min(H^{1/2} A_Ir P) >= lambda_min(H-bar) / kappa(A_Ir P)`.
pub fn verify_surrogate_bound<T: Scalar>(
    h: &DenseMatrix<T>,
    h_bar: &DenseMatrix<T>,
    a_ir_p: &DenseMatrix<T>,
    rank_tol: T,
) -> Result<SurrogateReport> {
    let (lhs, _) = compute_rho(h, a_ir_p, 1.0, rank_tol)?;
    let (s_min, _) = sigma_min_nonzero(a_ir_p, rank_tol)?
        .ok_or_else(|| Error::Undefined("A_Ir P is zero".into()))?;
    let rhs = sym_lambda_min(h_bar)? * s_min / a_ir_p.frobenius_norm();
    let (lhs, rhs) = (lhs.to_f64_lossy(), rhs.to_f64_lossy());
    Ok(SurrogateReport { lhs, rhs, pass: lhs >= rhs - SURROGATE_SLACK })
}

#[cfg(test)]
mod tests;
