//! Subspace-constrained iteration engines.
//!
//! Both methods keep the iterate on the affine set `{x : A_Ip x = b_Ip}` by
//! starting from `x0 = A_Ip^+ b_Ip` and moving only along `P`-projected
//! directions. Sketches act on the remaining rows `I_r`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::constraint::{consistency_tol, ConstraintFactor};
use crate::dense::{axpy, dot, DenseMatrix, DenseVector};
use crate::error::{dim_mismatch, Error, Result};
use crate::rng::{stream_rng, streams, SolverRng};
use crate::sampling::{default_max_resample, SketchDraw, SketchSpace};
use crate::scalar::Scalar;

/// Re-orthogonalize when `||p|| < REORTH_RATIO * ||d||`.
pub const REORTH_RATIO: f64 = 0.1;

/// A Krylov direction shorter than this multiple of `eps * ||d||` is
/// treated as zero.
const DIRECTION_COLLAPSE: f64 = 1e3;

/// Threshold below which `||S^T r||` counts as zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NullTol {
    /// `eps * (1 + ||b_Ir|| + ||A_Ir||_F ||x||)`, re-evaluated every step.
    #[default]
    Scaled,
    Absolute(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScrimConfig {
    pub zeta: f64,
    pub max_iters: usize,
    pub rse_tol: f64,
    pub null_tol: NullTol,
    /// `None` selects the space-dependent default.
    pub max_resample: Option<usize>,
}

impl Default for ScrimConfig {
    fn default() -> Self {
        Self {
            zeta: 1.0,
            max_iters: 10_000,
            rse_tol: 1e-10,
            null_tol: NullTol::Scaled,
            max_resample: None,
        }
    }
}

impl ScrimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta > 0.0 && self.zeta < 2.0) {
            return Err(Error::InvalidParameter(format!("zeta = {} is not in (0, 2)", self.zeta)));
        }
        validate_common(self.rse_tol, self.null_tol)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KrylovConfig {
    /// Truncation parameter; `None` keeps every previous direction.
    pub ell: Option<usize>,
    pub max_iters: usize,
    pub rse_tol: f64,
    pub null_tol: NullTol,
    pub max_resample: Option<usize>,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self {
            ell: Some(1),
            max_iters: 10_000,
            rse_tol: 1e-10,
            null_tol: NullTol::Scaled,
            max_resample: None,
        }
    }
}

impl KrylovConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ell == Some(0) {
            return Err(Error::InvalidParameter("ell must be at least 1".into()));
        }
        validate_common(self.rse_tol, self.null_tol)
    }

    /// Number of stored previous directions, `ell - 1`.
    fn window_cap(&self) -> usize {
        self.ell.map_or(usize::MAX, |l| l - 1)
    }
}

fn validate_common(rse_tol: f64, null_tol: NullTol) -> Result<()> {
    if !(rse_tol > 0.0) {
        return Err(Error::InvalidParameter(format!("rse_tol = {rse_tol} must be positive")));
    }
    if let NullTol::Absolute(t) = null_tol {
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!("null_tol = {t} must be positive")));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "lowercase")]
pub enum Algorithm {
    Scrim(ScrimConfig),
    Krylov(KrylovConfig),
}

impl Algorithm {
    pub fn validate(&self) -> Result<()> {
        match self {
            Algorithm::Scrim(c) => c.validate(),
            Algorithm::Krylov(c) => c.validate(),
        }
    }

    pub fn max_iters(&self) -> usize {
        match self {
            Algorithm::Scrim(c) => c.max_iters,
            Algorithm::Krylov(c) => c.max_iters,
        }
    }

    pub fn rse_tol(&self) -> f64 {
        match self {
            Algorithm::Scrim(c) => c.rse_tol,
            Algorithm::Krylov(c) => c.rse_tol,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Scrim(_) => "scrim",
            Algorithm::Krylov(_) => "krylov",
        }
    }
}

/// The system `(A, b)` together with its constraint factor and a cached
/// transpose of `A_Ir`, whose columns are the remaining rows.
#[derive(Clone, Debug)]
pub struct Problem<'a, T> {
    a: &'a DenseMatrix<T>,
    b: &'a DenseVector<T>,
    factor: &'a ConstraintFactor<T>,
    a_ir_t: DenseMatrix<T>,
    b_ir: Vec<T>,
    b_ir_norm: T,
    a_ir_fro: T,
}

impl<'a, T: Scalar> Problem<'a, T> {
    pub fn new(a: &'a DenseMatrix<T>, b: &'a DenseVector<T>, factor: &'a ConstraintFactor<T>) -> Result<Self> {
        if b.len() != a.rows() {
            return Err(dim_mismatch("Problem::new", a.rows(), b.len()));
        }
        if factor.n() != a.cols() || factor.partition().m() != a.rows() {
            return Err(dim_mismatch(
                "Problem::new (constraint factor)",
                format!("{}x{}", a.rows(), a.cols()),
                format!("{}x{}", factor.partition().m(), factor.n()),
            ));
        }
        let i_r = factor.partition().i_r();
        let a_ir_t = a.select_rows(i_r)?.transpose();
        let b_ir = b.select(i_r)?.into_vec();
        let b_ir_norm = dot(&b_ir, &b_ir).sqrt();
        let a_ir_fro = a_ir_t.frobenius_norm();
        Ok(Self { a, b, factor, a_ir_t, b_ir, b_ir_norm, a_ir_fro })
    }

    pub fn a(&self) -> &DenseMatrix<T> {
        self.a
    }

    pub fn b(&self) -> &DenseVector<T> {
        self.b
    }

    pub fn factor(&self) -> &ConstraintFactor<T> {
        self.factor
    }

    pub fn m_r(&self) -> usize {
        self.b_ir.len()
    }

    /// `A_Ir x - b_Ir`.
    pub fn residual_ir(&self, x: &DenseVector<T>) -> Vec<T> {
        (0..self.m_r())
            .map(|i| dot(self.a_ir_t.col(i), x.as_slice()) - self.b_ir[i])
            .collect()
    }

    /// `||A x - b||`.
    pub fn residual_norm(&self, x: &DenseVector<T>) -> T {
        self.a.matvec(x).expect("x has n entries").sub(self.b).norm()
    }

    /// `S^T (A_Ir x - b_Ir)`, touching only the sampled rows for index
    /// sketches.
    pub fn sketch_residual(&self, draw: &SketchDraw<'_, T>, x: &DenseVector<T>) -> Vec<T> {
        match draw.indices() {
            Some(ix) => ix
                .iter()
                .map(|&i| dot(self.a_ir_t.col(i), x.as_slice()) - self.b_ir[i])
                .collect(),
            None => draw.apply_t(&self.residual_ir(x)),
        }
    }

    /// `g = -A_Ir^T S w` where `w = S^T r`.
    fn gradient(&self, draw: &SketchDraw<'_, T>, w: &[T]) -> Vec<T> {
        let mut g = vec![T::zero(); self.a_ir_t.rows()];
        match draw.indices() {
            Some(ix) => {
                for (&i, &c) in ix.iter().zip(w) {
                    axpy(-c, self.a_ir_t.col(i), &mut g);
                }
            }
            None => {
                let sw = draw.apply(w, self.m_r());
                for (i, &c) in sw.iter().enumerate() {
                    if c != T::zero() {
                        axpy(-c, self.a_ir_t.col(i), &mut g);
                    }
                }
            }
        }
        g
    }

    fn null_tol(&self, tol: NullTol, x: &DenseVector<T>) -> T {
        match tol {
            NullTol::Scaled => T::epsilon() * (T::one() + self.b_ir_norm + self.a_ir_fro * x.norm()),
            NullTol::Absolute(t) => T::lit(t),
        }
    }
}

/// A stored direction `p^i` with its squared norm.
#[derive(Clone, Debug)]
pub struct Direction<T> {
    pub p: Vec<T>,
    pub norm_sq: T,
}

/// Iterate, counter, Krylov direction window and private random stream.
#[derive(Clone, Debug)]
pub struct SolverState<T> {
    x: DenseVector<T>,
    k: usize,
    window: VecDeque<Direction<T>>,
    rng: SolverRng,
    reorth_count: usize,
    resample_count: usize,
}

impl<T: Scalar> SolverState<T> {
    /// Starts at `x0 = A_Ip^+ b_Ip` with the iteration stream of `seed`.
    pub fn new(problem: &Problem<'_, T>, seed: u64) -> Self {
        Self::with_rng(problem.factor.x0().clone(), stream_rng(seed, streams::ITERATION))
    }

    /// Starts from an explicit (assumed feasible) point.
    pub fn with_rng(x: DenseVector<T>, rng: SolverRng) -> Self {
        Self {
            x,
            k: 0,
            window: VecDeque::new(),
            rng,
            reorth_count: 0,
            resample_count: 0,
        }
    }

    pub fn x(&self) -> &DenseVector<T> {
        &self.x
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Stored directions, oldest first.
    pub fn window(&self) -> &VecDeque<Direction<T>> {
        &self.window
    }

    pub fn reorth_count(&self) -> usize {
        self.reorth_count
    }

    /// Draws rejected because `||S^T r||` was below the null threshold.
    pub fn resample_count(&self) -> usize {
        self.resample_count
    }
}

/// Quantities of one accepted step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo<T> {
    /// `||S_k^T r^k||^2`.
    pub sk_res_sq: T,
    /// `||d^k||^2`.
    pub d_norm_sq: T,
    /// `||p^k||^2`; equals `d_norm_sq` for SCRIM.
    pub p_norm_sq: T,
    /// `alpha_k` or `delta_k`.
    pub step_size: T,
    pub resamples: usize,
    pub reorthogonalized: bool,
}

impl<T: Scalar> StepInfo<T> {
    /// Ratio `||d^k||^2 / ||p^k||^2`.
    pub fn q_k(&self) -> T {
        self.d_norm_sq / self.p_norm_sq
    }

    /// Exact decrease of `||x - A^+ b||^2` implied by the step:
    /// `zeta (2 - zeta) ||S^T r||^4 / ||d||^2` for SCRIM, and
    /// `||S^T r||^4 / ||p||^2` for the Krylov method (pass `zeta = 1`).
    pub fn error_decrease(&self, zeta: T) -> T {
        let two = T::lit(2.0);
        zeta * (two - zeta) * self.sk_res_sq * self.sk_res_sq / self.p_norm_sq
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepOutcome<T> {
    Stepped(StepInfo<T>),
    /// `A_Ir x = b_Ir` up to the null threshold; no step taken.
    Converged,
    /// No usable draw or direction; the iterate is unchanged.
    Stalled(String),
}

enum Drawn<T> {
    Found { g: Vec<T>, sk_res_sq: T, resamples: usize },
    Converged,
    Stalled(String),
}

fn draw_nonnull<T: Scalar, S: SketchSpace<T> + ?Sized>(
    problem: &Problem<'_, T>,
    space: &S,
    state: &mut SolverState<T>,
    null_tol: NullTol,
    max_resample: Option<usize>,
) -> Drawn<T> {
    let tol = problem.null_tol(null_tol, &state.x);
    let budget = max_resample.unwrap_or_else(|| default_max_resample(space));
    for attempt in 0..=budget {
        let draw = space.draw(&mut state.rng);
        let w = problem.sketch_residual(&draw, &state.x);
        let sq = dot(&w, &w);
        if sq.sqrt() > tol {
            let g = problem.gradient(&draw, &w);
            return Drawn::Found { g, sk_res_sq: sq, resamples: attempt };
        }
        state.resample_count += 1;
        if attempt == 0 {
            let r = problem.residual_ir(&state.x);
            let full = dot(&r, &r).sqrt();
            if full <= tol * T::from_usize_lossy(problem.m_r().max(1)).sqrt() {
                return Drawn::Converged;
            }
        }
    }
    Drawn::Stalled(format!(
        "{} consecutive draws had ||S^T r|| <= {:e} while the remaining residual is not zero",
        budget + 1,
        tol.to_f64_lossy()
    ))
}

fn check_dims<T: Scalar, S: SketchSpace<T> + ?Sized>(
    problem: &Problem<'_, T>,
    space: &S,
    state: &SolverState<T>,
) -> Result<()> {
    if space.dim() != problem.m_r() {
        return Err(dim_mismatch("sketch space", problem.m_r(), space.dim()));
    }
    if state.x.len() != problem.a.cols() {
        return Err(dim_mismatch("solver state", problem.a.cols(), state.x.len()));
    }
    Ok(())
}

/// One SCRIM iteration: draw `S_k`, form `d^k = P g^k`, and move by
/// `alpha_k = (2 - zeta) ||S_k^T r||^2 / ||d^k||^2`.
pub fn scrim_step<T: Scalar, S: SketchSpace<T> + ?Sized>(
    problem: &Problem<'_, T>,
    space: &S,
    state: &mut SolverState<T>,
    cfg: &ScrimConfig,
) -> Result<StepOutcome<T>> {
    check_dims(problem, space, state)?;
    let (mut d, sk_res_sq, resamples) = match draw_nonnull(problem, space, state, cfg.null_tol, cfg.max_resample) {
        Drawn::Found { g, sk_res_sq, resamples } => (g, sk_res_sq, resamples),
        Drawn::Converged => return Ok(StepOutcome::Converged),
        Drawn::Stalled(why) => return Ok(StepOutcome::Stalled(why)),
    };
    problem.factor.apply_p_in_place(&mut d);
    let d_norm_sq = dot(&d, &d);
    if !(d_norm_sq > T::zero()) {
        return Ok(StepOutcome::Stalled("projected direction vanished".into()));
    }
    let alpha = (T::lit(2.0) - T::lit(cfg.zeta)) * sk_res_sq / d_norm_sq;
    axpy(alpha, &d, state.x.as_mut_slice());
    state.k += 1;
    Ok(StepOutcome::Stepped(StepInfo {
        sk_res_sq,
        d_norm_sq,
        p_norm_sq: d_norm_sq,
        step_size: alpha,
        resamples,
        reorthogonalized: false,
    }))
}

/// One SC-IS-Krylov iteration: draw `S_k`, form `d^k = P g^k`,
/// orthogonalize it against the stored window to get `p^k`, move by
/// `delta_k = ||S_k^T r||^2 / ||p^k||^2`, then push `p^k` into the window.
pub fn krylov_step<T: Scalar, S: SketchSpace<T> + ?Sized>(
    problem: &Problem<'_, T>,
    space: &S,
    state: &mut SolverState<T>,
    cfg: &KrylovConfig,
) -> Result<StepOutcome<T>> {
    check_dims(problem, space, state)?;
    let (mut d, sk_res_sq, resamples) = match draw_nonnull(problem, space, state, cfg.null_tol, cfg.max_resample) {
        Drawn::Found { g, sk_res_sq, resamples } => (g, sk_res_sq, resamples),
        Drawn::Converged => return Ok(StepOutcome::Converged),
        Drawn::Stalled(why) => return Ok(StepOutcome::Stalled(why)),
    };
    problem.factor.apply_p_in_place(&mut d);
    let d_norm_sq = dot(&d, &d);
    if !(d_norm_sq > T::zero()) {
        return Ok(StepOutcome::Stalled("projected direction vanished".into()));
    }

    let mut p = d.clone();
    // Classical Gram-Schmidt: every coefficient is taken against d.
    let coeffs: Vec<T> = state.window.iter().map(|w| dot(&d, &w.p) / w.norm_sq).collect();
    for (w, &c) in state.window.iter().zip(&coeffs) {
        axpy(-c, &w.p, &mut p);
    }
    let mut p_norm_sq = dot(&p, &p);
    let ratio = T::lit(REORTH_RATIO);
    let reorth = !state.window.is_empty() && p_norm_sq < ratio * ratio * d_norm_sq;
    if reorth {
        let coeffs: Vec<T> = state.window.iter().map(|w| dot(&p, &w.p) / w.norm_sq).collect();
        for (w, &c) in state.window.iter().zip(&coeffs) {
            axpy(-c, &w.p, &mut p);
        }
        p_norm_sq = dot(&p, &p);
        state.reorth_count += 1;
    }
    let collapse = T::lit(DIRECTION_COLLAPSE) * T::epsilon();
    if !(p_norm_sq > collapse * collapse * d_norm_sq) {
        return Ok(StepOutcome::Stalled(format!(
            "orthogonalized direction collapsed (||p||^2 = {:e}, ||d||^2 = {:e})",
            p_norm_sq.to_f64_lossy(),
            d_norm_sq.to_f64_lossy()
        )));
    }

    let delta = sk_res_sq / p_norm_sq;
    axpy(delta, &p, state.x.as_mut_slice());
    state.k += 1;
    let cap = cfg.window_cap();
    if cap > 0 {
        if state.window.len() == cap {
            state.window.pop_front();
        }
        state.window.push_back(Direction { p, norm_sq: p_norm_sq });
    }
    Ok(StepOutcome::Stepped(StepInfo {
        sk_res_sq,
        d_norm_sq,
        p_norm_sq,
        step_size: delta,
        resamples,
        reorthogonalized: reorth,
    }))
}

/// Dispatches to [`scrim_step`] or [`krylov_step`].
pub fn step<T: Scalar, S: SketchSpace<T> + ?Sized>(
    problem: &Problem<'_, T>,
    space: &S,
    state: &mut SolverState<T>,
    algo: &Algorithm,
) -> Result<StepOutcome<T>> {
    match algo {
        Algorithm::Scrim(c) => scrim_step(problem, space, state, c),
        Algorithm::Krylov(c) => krylov_step(problem, space, state, c),
    }
}

/// Which iterations are written to the trace.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceStride {
    /// Every iteration up to 1000, then every `ceil(max_iters / 1000)`-th.
    #[default]
    Auto,
    Every(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceOptions {
    pub stride: TraceStride,
    /// Record `||A x - b||` at traced iterations (costs `O(mn)` each).
    pub record_residual: bool,
    /// Without a reference solution, the residual stopping test runs every
    /// this many iterations.
    pub check_interval: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { stride: TraceStride::Auto, record_residual: true, check_interval: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub rse: Option<f64>,
    pub residual_norm: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIters,
    Stalled,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIters => "max_iters",
            RunStatus::Stalled => "stalled",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub status: RunStatus,
    pub iterations: usize,
    pub reorth_count: usize,
    pub resample_count: usize,
    pub stall_reason: Option<String>,
}

impl RunTrace {
    pub fn final_rse(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.rse)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput<T> {
    pub trace: RunTrace,
    pub x: DenseVector<T>,
}

/// Squared relative solution error `||x - x*||^2 / ||x*||^2` (absolute when
/// `x* = 0`).
pub fn rse<T: Scalar>(x: &DenseVector<T>, x_star: &DenseVector<T>) -> T {
    let num = x.sub(x_star).norm_sq();
    let den = x_star.norm_sq();
    if den > T::zero() {
        num / den
    } else {
        num
    }
}

/// Runs one seeded trial until the stopping rule fires.
///
/// With `x_star` the rule is `RSE < rse_tol`; without it,
/// `||A x - b|| / ||b|| < sqrt(rse_tol)` checked every
/// `opts.check_interval` iterations.
pub fn run<T: Scalar, S: SketchSpace<T> + ?Sized>(
    problem: &Problem<'_, T>,
    space: &S,
    algo: &Algorithm,
    seed: u64,
    opts: &TraceOptions,
    x_star: Option<&DenseVector<T>>,
) -> Result<RunOutput<T>> {
    algo.validate()?;
    if let Some(xs) = x_star {
        if xs.len() != problem.a.cols() {
            return Err(dim_mismatch("run (x_star)", problem.a.cols(), xs.len()));
        }
        let res = problem.residual_norm(xs);
        let bound = consistency_tol::<T>() * (problem.a.frobenius_norm() * xs.norm() + problem.b.norm());
        if res > bound {
            return Err(Error::Precondition(format!(
                "reference solution leaves residual {:e} > {:e}; the system is not consistent",
                res.to_f64_lossy(),
                bound.to_f64_lossy()
            )));
        }
    }
    let mut state = SolverState::new(problem, seed);
    let max_iters = algo.max_iters();
    let rse_tol = algo.rse_tol();
    let res_tol = rse_tol.sqrt();
    let b_norm = problem.b.norm().to_f64_lossy();
    let stride = match opts.stride {
        TraceStride::Auto => max_iters.div_ceil(1000).max(1),
        TraceStride::Every(s) => s.max(1),
    };
    let traced = |k: usize| match opts.stride {
        TraceStride::Auto => k <= 1000 || k % stride == 0,
        TraceStride::Every(_) => k % stride == 0,
    };
    let check_every = opts.check_interval.max(1);

    let mut records = Vec::new();
    let record = |state: &SolverState<T>, records: &mut Vec<TraceRecord>| {
        records.push(TraceRecord {
            k: state.k,
            rse: x_star.map(|xs| rse(&state.x, xs).to_f64_lossy()),
            residual_norm: opts.record_residual.then(|| problem.residual_norm(&state.x).to_f64_lossy()),
        });
    };
    let done = |state: &SolverState<T>| -> bool {
        match x_star {
            Some(xs) => rse(&state.x, xs).to_f64_lossy() < rse_tol,
            None => {
                if state.k % check_every != 0 {
                    return false;
                }
                let r = problem.residual_norm(&state.x).to_f64_lossy();
                if b_norm > 0.0 {
                    r / b_norm < res_tol
                } else {
                    r < res_tol
                }
            }
        }
    };

    record(&state, &mut records);
    let mut last_recorded = Some(0);
    let mut stall_reason = None;
    let status = if done(&state) {
        RunStatus::Converged
    } else {
        loop {
            if state.k >= max_iters {
                break RunStatus::MaxIters;
            }
            match step(problem, space, &mut state, algo)? {
                StepOutcome::Stepped(_) => {
                    if traced(state.k) {
                        record(&state, &mut records);
                        last_recorded = Some(state.k);
                    }
                    if done(&state) {
                        break RunStatus::Converged;
                    }
                }
                StepOutcome::Converged => break RunStatus::Converged,
                StepOutcome::Stalled(why) => {
                    stall_reason = Some(why);
                    break RunStatus::Stalled;
                }
            }
        }
    };
    if last_recorded != Some(state.k) {
        record(&state, &mut records);
    }
    Ok(RunOutput {
        trace: RunTrace {
            records,
            status,
            iterations: state.k,
            reorth_count: state.reorth_count,
            resample_count: state.resample_count,
            stall_reason,
        },
        x: state.x,
    })
}
