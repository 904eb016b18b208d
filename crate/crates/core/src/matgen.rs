//! Synthetic matrices `A = U D V^T` whose singular values fall into three
//! separated clusters, and consistent right-hand sides for them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{DenseMatrix, DenseVector};
use crate::error::{Error, Result};
use crate::linalg::{pinv_solve_least_norm, qr_thin};
use crate::rng::{gaussian_matrix, gaussian_vector, stream_rng, streams};
use crate::scalar::Scalar;

/// Default interval of the large cluster.
pub const DEFAULT_R_L: (f64, f64) = (900.0, 1000.0);
/// Default interval of the small cluster.
pub const DEFAULT_R_S: (f64, f64) = (50.0, 150.0);
/// Lower end of the default middle interval.
pub const DEFAULT_BETA_M: f64 = 300.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub n_l: usize,
    pub n_s: usize,
    pub kappa_m: f64,
    pub r_s: (f64, f64),
    pub r_m: (f64, f64),
    pub r_l: (f64, f64),
    pub seed: u64,
}

impl ClusterSpec {
    /// Spec with the default intervals `R_L = [900, 1000]`, `R_S = [50, 150]`
    /// and `R_M = [300, 300 min(kappa_m, 4/3)]`.
    pub fn with_default_ranges(m: usize, n: usize, r: usize, n_l: usize, n_s: usize, kappa_m: f64, seed: u64) -> Self {
        Self {
            m,
            n,
            r,
            n_l,
            n_s,
            kappa_m,
            r_s: DEFAULT_R_S,
            r_m: (DEFAULT_BETA_M, DEFAULT_BETA_M * kappa_m.min(4.0 / 3.0)),
            r_l: DEFAULT_R_L,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.r == 0 || self.r > self.m.min(self.n) {
            return bad(format!("r = {} must satisfy 1 <= r <= min(m, n) = {}", self.r, self.m.min(self.n)));
        }
        if self.n_l + self.n_s >= self.r {
            return bad(format!(
                "n_L + n_S = {} must be smaller than r = {} so the middle cluster is nonempty",
                self.n_l + self.n_s,
                self.r
            ));
        }
        if !(self.kappa_m > 1.0) || !self.kappa_m.is_finite() {
            return bad(format!("kappa_M = {} must be a finite number greater than 1", self.kappa_m));
        }
        let (bs, gs) = self.r_s;
        let (bm, gm) = self.r_m;
        let (bl, gl) = self.r_l;
        let all = [bs, gs, bm, gm, bl, gl];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("interval endpoints must be finite".into());
        }
        if !(0.0 < bs && bs <= gs && gs < bm && bm <= gm && gm < bl && bl <= gl) {
            return bad(format!(
                "intervals must satisfy 0 < beta_S <= gamma_S < beta_M <= gamma_M < beta_L <= gamma_L \
                 (got R_S = [{bs}, {gs}], R_M = [{bm}, {gm}], R_L = [{bl}, {gl}])"
            ));
        }
        if gm / bm > self.kappa_m {
            return bad(format!(
                "gamma_M / beta_M = {} exceeds kappa_M = {}",
                gm / bm,
                self.kappa_m
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GeneratedMatrix<T> {
    pub a: DenseMatrix<T>,
    /// The sampled diagonal of `D`, nonincreasing.
    pub sigma: Vec<T>,
    /// `m x r`, orthonormal columns.
    pub u: DenseMatrix<T>,
    /// `n x r`, orthonormal columns.
    pub v: DenseMatrix<T>,
}

fn uniform_on(rng: &mut crate::rng::SolverRng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Draws `U`, `V` from thin QR of Gaussian matrices and the singular values
/// uniformly from their intervals, all from the matrix stream of `spec.seed`.
pub fn generate<T: Scalar>(spec: &ClusterSpec) -> Result<GeneratedMatrix<T>> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, streams::MATRIX);
    let u = qr_thin(&gaussian_matrix::<T>(spec.m, spec.r, &mut rng))?.0;
    let v = qr_thin(&gaussian_matrix::<T>(spec.n, spec.r, &mut rng))?.0;
    let n_m = spec.r - spec.n_l - spec.n_s;
    let mut sigma: Vec<f64> = Vec::with_capacity(spec.r);
    sigma.extend((0..spec.n_l).map(|_| uniform_on(&mut rng, spec.r_l)));
    sigma.extend((0..n_m).map(|_| uniform_on(&mut rng, spec.r_m)));
    sigma.extend((0..spec.n_s).map(|_| uniform_on(&mut rng, spec.r_s)));
    sigma.sort_by(|a, b| b.total_cmp(a));
    let sigma: Vec<T> = sigma.into_iter().map(T::lit).collect();
    let mut ud = u.clone();
    for (j, &s) in sigma.iter().enumerate() {
        for x in ud.col_mut(j) {
            *x *= s;
        }
    }
    let a = ud.matmul(&v.transpose())?;
    Ok(GeneratedMatrix { a, sigma, u, v })
}

#[derive(Clone, Debug)]
pub struct ConsistentSystem<T> {
    pub b: DenseVector<T>,
    /// The Gaussian vector used to form `b = A x_true`.
    pub x_true: DenseVector<T>,
    /// `A^+ b`, the limit of the solvers; differs from `x_true` when `A` is
    /// rank deficient.
    pub x_star: DenseVector<T>,
}

/// `b = A x_true` with `x_true` standard normal from the right-hand-side
/// stream of `seed`.
pub fn make_consistent_system<T: Scalar>(a: &DenseMatrix<T>, seed: u64, rank_tol: T) -> Result<ConsistentSystem<T>> {
    let mut rng = stream_rng(seed, streams::RHS);
    let x_true = gaussian_vector::<T>(a.cols(), &mut rng);
    let b = a.matvec(&x_true)?;
    let x_star = pinv_solve_least_norm(a, &b, rank_tol)?;
    Ok(ConsistentSystem { b, x_true, x_star })
}
