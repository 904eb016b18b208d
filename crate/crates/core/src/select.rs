//! Constraint-row selection.
//!
//! Each strategy picks `m_p` rows of `A` aiming for a small interpolative
//! decomposition error `||A - A A_Ip^+ A_Ip||_F`, which equals
//! `||A_Ir P||_F`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dense::{dot, DenseMatrix};
use crate::error::{Error, Result};
use crate::linalg::svd_truncated;
use crate::rng::{gaussian_matrix, stream_rng, streams, weighted_index, SolverRng};
use crate::scalar::Scalar;

/// Residual row norms below `STOP_TOL * ||A||_F` end pivoting early.
pub const STOP_TOL: f64 = 1e-12;

/// Downdated squared norms below this fraction of their reference value are
/// recomputed from scratch.
const RECOMPUTE_FRACTION: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    Cpqr,
    Svd,
    Sqnorm,
    Skcpqr,
    Rbrp,
}

impl SelectionMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::Cpqr => "cpqr",
            Self::Svd => "svd",
            Self::Sqnorm => "sqnorm",
            Self::Skcpqr => "skcpqr",
            Self::Rbrp => "rbrp",
        }
    }

    pub fn is_randomized(self) -> bool {
        matches!(self, Self::Sqnorm | Self::Skcpqr | Self::Rbrp)
    }
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectionMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cpqr" => Ok(Self::Cpqr),
            "svd" => Ok(Self::Svd),
            "sqnorm" => Ok(Self::Sqnorm),
            "skcpqr" => Ok(Self::Skcpqr),
            "rbrp" => Ok(Self::Rbrp),
            other => Err(Error::InvalidParameter(format!("unknown selection method {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub method: SelectionMethod,
    pub m_p: usize,
    /// Sketch width for `skcpqr`.
    #[serde(default)]
    pub sketch_cols: Option<usize>,
    /// Candidate block size for `rbrp`.
    #[serde(default)]
    pub block_size: Option<usize>,
    /// Acceptance fraction for `rbrp`; `1 / block_size` when absent.
    #[serde(default)]
    pub rbrp_threshold: Option<f64>,
    pub seed: u64,
}

impl SelectionConfig {
    pub fn new(method: SelectionMethod, m_p: usize, seed: u64) -> Self {
        Self {
            method,
            m_p,
            sketch_cols: None,
            block_size: None,
            rbrp_threshold: None,
            seed,
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.m_p == 0 || self.m_p > m {
            return Err(Error::InvalidParameter(format!(
                "m_p = {} must lie in [1, {m}]",
                self.m_p
            )));
        }
        match self.method {
            SelectionMethod::Skcpqr if self.sketch_cols.is_none_or(|s| s < self.m_p) => {
                Err(Error::InvalidParameter(format!(
                    "skcpqr needs sketch_cols >= m_p = {}, got {:?}",
                    self.m_p, self.sketch_cols
                )))
            }
            SelectionMethod::Rbrp if self.block_size.is_none_or(|b| b == 0) => Err(
                Error::InvalidParameter("rbrp needs block_size >= 1".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Indices chosen by a selector, in pivot order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub indices: Vec<usize>,
    /// True when fewer than the requested rows were returned.
    pub truncated: bool,
    pub notes: Vec<String>,
}

impl Selection {
    fn complete(indices: Vec<usize>) -> Self {
        Self {
            indices,
            truncated: false,
            notes: Vec::new(),
        }
    }
}

/// Serializable record of one selection run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionDocument {
    pub method: SelectionMethod,
    pub m_p: usize,
    pub indices: Vec<usize>,
    pub seed: u64,
    pub achieved_id_error: f64,
    #[serde(default)]
    pub truncated: bool,
    #[serde(default)]
    pub notes: Vec<String>,
}

/// Residual matrix `X^{(t)}` of the row-deflation recursion together with
/// its squared row norms.
struct RowResidual<T> {
    x: DenseMatrix<T>,
    norms: Vec<T>,
    reference: Vec<T>,
    selected: Vec<bool>,
    stop_sq: T,
}

impl<T: Scalar> RowResidual<T> {
    fn new(a: &DenseMatrix<T>) -> Self {
        let norms = a.gram_row_norms();
        let fro = a.frobenius_norm();
        let stop = T::lit(STOP_TOL) * fro;
        Self {
            x: a.clone(),
            reference: norms.clone(),
            norms,
            selected: vec![false; a.rows()],
            stop_sq: stop * stop,
        }
    }

    /// Lowest-index row of maximal residual norm among unselected rows.
    fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &v) in self.norms.iter().enumerate() {
            if self.selected[i] {
                continue;
            }
            if best.is_none_or(|b| v > self.norms[b]) {
                best = Some(i);
            }
        }
        best
    }

    fn is_exhausted(&self, i: usize) -> bool {
        !(self.norms[i] > self.stop_sq)
    }

    fn row(&self, i: usize) -> Vec<T> {
        (0..self.x.cols()).map(|j| self.x[(i, j)]).collect()
    }

    /// `X <- X - X x_s x_s^T / ||x_s||^2` with the norm downdate.
    fn deflate(&mut self, s: usize) {
        let xs = self.row(s);
        let ns = dot(&xs, &xs);
        self.selected[s] = true;
        if ns > T::zero() {
            let mut w = vec![T::zero(); self.x.rows()];
            for (j, &v) in xs.iter().enumerate() {
                if v != T::zero() {
                    for (wi, &xij) in w.iter_mut().zip(self.x.col(j)) {
                        *wi += xij * v;
                    }
                }
            }
            for (j, &v) in xs.iter().enumerate() {
                let f = v / ns;
                if f != T::zero() {
                    for (xij, &wi) in self.x.col_mut(j).iter_mut().zip(&w) {
                        *xij -= f * wi;
                    }
                }
            }
            let guard = T::lit(RECOMPUTE_FRACTION);
            for i in 0..self.x.rows() {
                if self.selected[i] {
                    continue;
                }
                let downdated = self.norms[i] - w[i] * w[i] / ns;
                if downdated < guard * self.reference[i] {
                    let r = self.row(i);
                    let exact = dot(&r, &r);
                    self.norms[i] = exact;
                    self.reference[i] = exact;
                } else {
                    self.norms[i] = downdated;
                }
            }
        }
        for j in 0..self.x.cols() {
            self.x[(s, j)] = T::zero();
        }
        self.norms[s] = T::zero();
    }

    fn total(&self) -> T {
        self.norms
            .iter()
            .zip(&self.selected)
            .filter(|(_, &sel)| !sel)
            .map(|(&v, _)| v)
            .sum()
    }
}

fn check_request<T: Scalar>(a: &DenseMatrix<T>, m_p: usize) -> Result<()> {
    if a.is_empty() {
        return Err(Error::Empty("row selection on an empty matrix"));
    }
    if m_p > a.rows() {
        return Err(Error::InvalidParameter(format!(
            "m_p = {m_p} exceeds the {} available rows",
            a.rows()
        )));
    }
    Ok(())
}

fn early_stop_note(found: usize, wanted: usize) -> String {
    format!("residual exhausted after {found} of {wanted} pivots")
}

/// Greedy row pivoting on `A` (column-pivoted QR of `A^T`).
pub fn select_cpqr<T: Scalar>(a: &DenseMatrix<T>, m_p: usize) -> Result<Selection> {
    Ok(cpqr_with_residual(a, m_p)?.0)
}

/// CPQR pivots plus the Frobenius norm of the final deflated residual.
pub(crate) fn cpqr_with_residual<T: Scalar>(
    a: &DenseMatrix<T>,
    m_p: usize,
) -> Result<(Selection, T)> {
    check_request(a, m_p)?;
    let mut res = RowResidual::new(a);
    let mut indices = Vec::with_capacity(m_p);
    while indices.len() < m_p {
        match res.argmax() {
            Some(s) if !res.is_exhausted(s) => {
                res.deflate(s);
                indices.push(s);
            }
            _ => {
                let sel = Selection {
                    notes: vec![early_stop_note(indices.len(), m_p)],
                    indices,
                    truncated: true,
                };
                return Ok((sel, res.x.frobenius_norm()));
            }
        }
    }
    Ok((Selection::complete(indices), res.x.frobenius_norm()))
}

/// CPQR on `A V_{m_p}`, the coordinates of the rows along the leading right
/// singular vectors. `m_p` is clipped to the numerical rank.
pub fn select_svd<T: Scalar>(a: &DenseMatrix<T>, m_p: usize, rank_tol: T) -> Result<Selection> {
    check_request(a, m_p)?;
    let f = svd_truncated(a, rank_tol)?;
    let k = m_p.min(f.rank());
    let mut notes = Vec::new();
    if k < m_p {
        notes.push(format!("m_p clipped from {m_p} to numerical rank {k}"));
    }
    if k == 0 {
        return Ok(Selection {
            indices: Vec::new(),
            truncated: m_p > 0,
            notes,
        });
    }
    let leading: Vec<usize> = (0..k).collect();
    let coords = a.matmul(&f.v().select_cols(&leading)?)?;
    let mut sel = select_cpqr(&coords, k)?;
    sel.truncated |= k < m_p;
    notes.append(&mut sel.notes);
    sel.notes = notes;
    Ok(sel)
}

/// Sequential squared-norm sampling without replacement.
pub fn select_sqnorm<T: Scalar>(a: &DenseMatrix<T>, m_p: usize, seed: u64) -> Result<Selection> {
    let mut rng = stream_rng(seed, streams::SELECTION);
    select_sqnorm_with(a, m_p, &mut rng)
}

pub fn select_sqnorm_with<T: Scalar>(
    a: &DenseMatrix<T>,
    m_p: usize,
    rng: &mut SolverRng,
) -> Result<Selection> {
    check_request(a, m_p)?;
    let mut weights: Vec<f64> = a.gram_row_norms().iter().map(|v| v.to_f64_lossy()).collect();
    let nonzero = weights.iter().filter(|w| **w > 0.0).count();
    if nonzero < m_p {
        return Err(Error::InvalidParameter(format!(
            "only {nonzero} nonzero rows available for m_p = {m_p}"
        )));
    }
    let mut indices = Vec::with_capacity(m_p);
    for _ in 0..m_p {
        let i = weighted_index(&weights, rng).expect("enough positive weights remain");
        weights[i] = 0.0;
        indices.push(i);
    }
    Ok(Selection::complete(indices))
}

/// CPQR on the Gaussian sketch `Y = A G` with `G` of size `n x s`.
pub fn select_skcpqr<T: Scalar>(
    a: &DenseMatrix<T>,
    m_p: usize,
    sketch_cols: usize,
    seed: u64,
) -> Result<Selection> {
    if sketch_cols < m_p {
        return Err(Error::InvalidParameter(format!(
            "sketch width {sketch_cols} smaller than m_p = {m_p}"
        )));
    }
    let mut rng = stream_rng(seed, streams::SELECTION);
    let g = gaussian_matrix::<T>(a.cols(), sketch_cols, &mut rng);
    select_skcpqr_with_sketch(a, m_p, &g)
}

/// Sketched CPQR with a caller-supplied sketch `G` (`n x s`).
pub fn select_skcpqr_with_sketch<T: Scalar>(
    a: &DenseMatrix<T>,
    m_p: usize,
    g: &DenseMatrix<T>,
) -> Result<Selection> {
    check_request(a, m_p)?;
    if g.cols() < m_p {
        return Err(Error::InvalidParameter(format!(
            "sketch width {} smaller than m_p = {m_p}",
            g.cols()
        )));
    }
    let y = a.matmul(g)?;
    select_cpqr(&y, m_p)
}

/// Blockwise random pivoting with a local-CPQR acceptance filter.
///
/// Each round samples up to `block_size` candidate rows proportionally to
/// the current residual row norms, pivots greedily within the candidate
/// block and accepts pivots while their residual norm² is at least
/// `threshold` times the block's remaining residual norm². The first pivot
/// of every block is always accepted. `threshold` defaults to
/// `1 / block_size`.
pub fn select_rbrp<T: Scalar>(
    a: &DenseMatrix<T>,
    m_p: usize,
    block_size: usize,
    seed: u64,
) -> Result<Selection> {
    let mut rng = stream_rng(seed, streams::SELECTION);
    select_rbrp_with(a, m_p, block_size, None, &mut rng)
}

pub fn select_rbrp_with<T: Scalar>(
    a: &DenseMatrix<T>,
    m_p: usize,
    block_size: usize,
    threshold: Option<f64>,
    rng: &mut SolverRng,
) -> Result<Selection> {
    check_request(a, m_p)?;
    if block_size == 0 {
        return Err(Error::InvalidParameter("rbrp block size must be >= 1".into()));
    }
    let threshold = T::lit(threshold.unwrap_or(1.0 / block_size as f64));
    let mut res = RowResidual::new(a);
    let mut indices = Vec::with_capacity(m_p);

    while indices.len() < m_p {
        if !(res.total() > res.stop_sq) {
            break;
        }
        let want = block_size.min(m_p - indices.len());
        let mut weights: Vec<f64> = (0..a.rows())
            .map(|i| {
                if res.selected[i] || res.is_exhausted(i) {
                    0.0
                } else {
                    res.norms[i].to_f64_lossy()
                }
            })
            .collect();
        let mut candidates = Vec::with_capacity(want);
        while candidates.len() < want {
            match weighted_index(&weights, rng) {
                Some(i) => {
                    weights[i] = 0.0;
                    candidates.push(i);
                }
                None => break,
            }
        }
        if candidates.is_empty() {
            break;
        }

        // Local greedy pivoting on the candidate block of the residual.
        let mut local = RowResidual::new(&res.x.select_rows(&candidates)?);
        local.stop_sq = res.stop_sq;
        let mut accepted = Vec::new();
        loop {
            let Some(p) = local.argmax() else { break };
            if local.is_exhausted(p) {
                break;
            }
            let block_total = local.total();
            if !accepted.is_empty() && local.norms[p] < threshold * block_total {
                break;
            }
            local.deflate(p);
            accepted.push(candidates[p]);
        }
        for &s in &accepted {
            res.deflate(s);
            indices.push(s);
        }
    }

    let truncated = indices.len() < m_p;
    Ok(Selection {
        notes: if truncated {
            vec![early_stop_note(indices.len(), m_p)]
        } else {
            Vec::new()
        },
        indices,
        truncated,
    })
}

/// Dispatches on `cfg.method`.
pub fn select<T: Scalar>(a: &DenseMatrix<T>, cfg: &SelectionConfig, rank_tol: T) -> Result<Selection> {
    cfg.validate(a.rows())?;
    match cfg.method {
        SelectionMethod::Cpqr => select_cpqr(a, cfg.m_p),
        SelectionMethod::Svd => select_svd(a, cfg.m_p, rank_tol),
        SelectionMethod::Sqnorm => select_sqnorm(a, cfg.m_p, cfg.seed),
        SelectionMethod::Skcpqr => {
            select_skcpqr(a, cfg.m_p, cfg.sketch_cols.unwrap_or(cfg.m_p), cfg.seed)
        }
        SelectionMethod::Rbrp => {
            let mut rng = stream_rng(cfg.seed, streams::SELECTION);
            select_rbrp_with(
                a,
                cfg.m_p,
                cfg.block_size.unwrap_or(1),
                cfg.rbrp_threshold,
                &mut rng,
            )
        }
    }
}

/// Interpolative decomposition error `||A - A A_Ip^+ A_Ip||_F`.
pub fn id_error<T: Scalar>(a: &DenseMatrix<T>, indices: &[usize], rank_tol: T) -> Result<T> {
    let f = svd_truncated(&a.select_rows(indices)?, rank_tol)?;
    let vp = f.v();
    let resid = a.sub(&a.matmul(&vp)?.matmul(&vp.transpose())?)?;
    Ok(resid.frobenius_norm())
}

#[cfg(test)]
mod tests;
