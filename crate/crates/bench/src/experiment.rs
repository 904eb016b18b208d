//! Seeded trials: system setup, one run per trial, and the files `bench`
//! writes.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use scsolve_core::linalg::pinv_solve_least_norm;
use scsolve_core::matgen::{generate, make_consistent_system};
use scsolve_core::select::select;
use scsolve_core::solver::{rse, RunTrace, TraceRecord};
use scsolve_core::{
    build_constraint, make_partition_space, run, Algorithm, DenseMatrix, DenseVector, Problem, SingleRowSpace,
    SketchSpace, TraceOptions, DEFAULT_RANK_TOL,
};
use serde::Serialize;

use crate::aggregate::{aggregate_traces, mean, median, QuantileRow};
use crate::config::{ExperimentConfig, MatrixSource, RhsSource, SamplerSpec, SelectionSpec};
use crate::error::{BenchError, Result};
use crate::format::fmt_f64;
use crate::mm::{read_matrix_market, read_vector, write_file};

/// Builds the sketch space for the remaining rows. Partitions are drawn
/// from `seed`.
pub fn make_space(
    a_ir: &DenseMatrix<f64>,
    a_ir_p: &DenseMatrix<f64>,
    sampler: SamplerSpec,
    seed: u64,
) -> Result<Box<dyn SketchSpace<f64>>> {
    Ok(match sampler {
        SamplerSpec::SingleRow => {
            // When I_p already spans the row space every row of A_Ir P
            // vanishes; the start point is then the solution and any
            // distribution will do.
            let rows = if a_ir_p.frobenius_norm() > 0.0 { a_ir_p } else { a_ir };
            Box::new(SingleRowSpace::from_rows(rows)?)
        }
        SamplerSpec::Partition { q } => Box::new(make_partition_space(a_ir, q, seed)?),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub m_p: usize,
    pub status: &'static str,
    pub iterations: usize,
    /// `k q / m_r`.
    pub full_iterations: f64,
    pub final_rse: Option<f64>,
    pub final_residual: Option<f64>,
    pub stall_reason: Option<String>,
}

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub summary: TrialSummary,
    pub trace: RunTrace,
}

/// One run on `(a, b)` with constraint rows `i_p`.
#[allow(clippy::too_many_arguments)]
pub fn run_trial(
    a: &DenseMatrix<f64>,
    b: &DenseVector<f64>,
    i_p: &[usize],
    sampler: SamplerSpec,
    algo: &Algorithm,
    seed: u64,
    opts: &TraceOptions,
    x_star: Option<&DenseVector<f64>>,
) -> Result<TrialResult> {
    let factor = build_constraint(a, b, i_p, DEFAULT_RANK_TOL)?;
    let m_r = factor.partition().m_r();
    if m_r == 0 {
        return Err(BenchError::Usage("I_p covers every row, nothing is left to sample".into()));
    }
    let a_ir = a.select_rows(factor.partition().i_r())?;
    let a_ir_p = factor.reduced_matrix(a, DEFAULT_RANK_TOL)?;
    let space = make_space(&a_ir, &a_ir_p, sampler, seed)?;
    let problem = Problem::new(a, b, &factor)?;
    let out = run(&problem, space.as_ref(), algo, seed, opts, x_star)?;
    let trace = out.trace;
    let last = trace.records.last().copied();
    let q = sampler.block_size().min(m_r);
    let summary = TrialSummary {
        trial: 0,
        seed,
        m_p: i_p.len(),
        status: trace.status.as_str(),
        iterations: trace.iterations,
        full_iterations: (trace.iterations * q) as f64 / m_r as f64,
        final_rse: x_star.map(|xs| rse(&out.x, xs)),
        final_residual: last.and_then(|r| r.residual_norm),
        stall_reason: trace.stall_reason.clone(),
    };
    Ok(TrialResult { summary, trace })
}

/// A loaded experiment: the system, its reference solution and any
/// selection that does not change across trials.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub a: DenseMatrix<f64>,
    pub b: DenseVector<f64>,
    pub x_star: Option<DenseVector<f64>>,
    fixed_ip: Option<Vec<usize>>,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let a = match &config.matrix {
            MatrixSource::File(p) => read_matrix_market(p)?,
            MatrixSource::Generate(spec) => generate::<f64>(spec)?.a,
        };
        let with_reference = a.rows() * a.cols() <= config.reference_size_cap;
        let (b, x_star) = match &config.rhs {
            RhsSource::File(p) => {
                let b = read_vector(p)?;
                if b.len() != a.rows() {
                    return Err(BenchError::Data(format!(
                        "right-hand side has {} entries, matrix has {} rows",
                        b.len(),
                        a.rows()
                    )));
                }
                let xs = if with_reference {
                    Some(pinv_solve_least_norm(&a, &b, DEFAULT_RANK_TOL)?)
                } else {
                    None
                };
                (b, xs)
            }
            RhsSource::Generate { seed } => {
                let sys = make_consistent_system(&a, *seed, DEFAULT_RANK_TOL)?;
                (sys.b, with_reference.then_some(sys.x_star))
            }
        };
        if x_star.is_none() && !config.record_residual {
            return Err(BenchError::Usage(
                "no reference solution within reference_size_cap, so record_residual must stay on".into(),
            ));
        }
        let fixed_ip = match &config.selection {
            SelectionSpec::None => Some(Vec::new()),
            SelectionSpec::Indices(ix) => Some(ix.clone()),
            s @ SelectionSpec::Strategy(c) if s.is_fixed() => Some(select(&a, c, DEFAULT_RANK_TOL)?.indices),
            SelectionSpec::Strategy(_) => None,
        };
        Ok(Self { config, a, b, x_star, fixed_ip })
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.config.base_seed.wrapping_add(trial as u64)
    }

    fn constraint_rows(&self, trial: usize) -> Result<Vec<usize>> {
        if let Some(ix) = &self.fixed_ip {
            return Ok(ix.clone());
        }
        let SelectionSpec::Strategy(c) = &self.config.selection else {
            unreachable!("fixed selections are cached")
        };
        let mut c = c.clone();
        c.seed = c.seed.wrapping_add(trial as u64);
        Ok(select(&self.a, &c, DEFAULT_RANK_TOL)?.indices)
    }

    pub fn run_one(&self, trial: usize) -> Result<TrialResult> {
        let cfg = &self.config;
        let seed = self.trial_seed(trial);
        let i_p = self.constraint_rows(trial)?;
        let algo = cfg.algorithm.to_algorithm(cfg.rse_tol, cfg.max_iters);
        let opts = TraceOptions { record_residual: cfg.record_residual, ..TraceOptions::default() };
        let mut r = run_trial(&self.a, &self.b, &i_p, cfg.sampler, &algo, seed, &opts, self.x_star.as_ref())?;
        r.summary.trial = trial;
        Ok(r)
    }

    /// Runs every trial on the current rayon pool. Results come back in
    /// trial order whatever the thread count; the first failing trial
    /// aborts the experiment.
    pub fn run_all(&self) -> std::result::Result<Vec<TrialResult>, PartialFailure> {
        let results: Vec<Result<TrialResult>> =
            (0..self.config.trials).into_par_iter().map(|t| self.run_one(t)).collect();
        let mut done = Vec::with_capacity(results.len());
        let mut failure = None;
        for (t, r) in results.into_iter().enumerate() {
            match r {
                Ok(r) => done.push(r),
                Err(e) if failure.is_none() => failure = Some((t, e)),
                Err(_) => {}
            }
        }
        match failure {
            None => Ok(done),
            Some((trial, error)) => Err(PartialFailure { trial, error, completed: done }),
        }
    }
}

#[derive(Debug)]
pub struct PartialFailure {
    pub trial: usize,
    pub error: BenchError,
    pub completed: Vec<TrialResult>,
}

pub fn trace_csv(results: &[TrialResult]) -> String {
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let mut out = String::from("trial,k,rse,residual_norm\n");
    for r in results {
        for rec in &r.trace.records {
            let _ = writeln!(out, "{},{},{},{}", r.summary.trial, rec.k, opt(rec.rse), opt(rec.residual_norm));
        }
    }
    out
}

pub fn aggregate_csv(rows: &[QuantileRow]) -> String {
    let mut out = String::from("k,min,q25,median,q75,max\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.k,
            fmt_f64(r.min),
            fmt_f64(r.q25),
            fmt_f64(r.median),
            fmt_f64(r.q75),
            fmt_f64(r.max)
        );
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    /// `rse`, or `relative_residual` when no reference solution was formed.
    pub metric: &'static str,
    pub reference_solution: bool,
    pub mean_iterations: f64,
    pub median_iterations: f64,
    pub mean_full_iterations: f64,
    pub converged: usize,
    pub max_iters: usize,
    pub stalled: usize,
    pub trials: Vec<TrialSummary>,
}

/// Aggregate rows and summary for a finished experiment.
pub fn summarize(exp: &Experiment, results: &[TrialResult]) -> (Vec<QuantileRow>, Summary) {
    let traces: Vec<&[TraceRecord]> = results.iter().map(|r| r.trace.records.as_slice()).collect();
    let reference = exp.x_star.is_some();
    let b_norm = exp.b.norm();
    let rows = if reference {
        aggregate_traces(&traces, |r| r.rse)
    } else {
        aggregate_traces(&traces, |r| {
            r.residual_norm.map(|v| if b_norm > 0.0 { v / b_norm } else { v })
        })
    };
    let iters: Vec<f64> = results.iter().map(|r| r.summary.iterations as f64).collect();
    let full: Vec<f64> = results.iter().map(|r| r.summary.full_iterations).collect();
    let count = |s: &str| results.iter().filter(|r| r.summary.status == s).count();
    let summary = Summary {
        config: exp.config.clone(),
        metric: if reference { "rse" } else { "relative_residual" },
        reference_solution: reference,
        mean_iterations: mean(&iters),
        median_iterations: median(&iters),
        mean_full_iterations: mean(&full),
        converged: count("converged"),
        max_iters: count("max_iters"),
        stalled: count("stalled"),
        trials: results.iter().map(|r| r.summary.clone()).collect(),
    };
    (rows, summary)
}

/// Writes `trace.csv`, `aggregate.csv` and `summary.json` into `dir`.
pub fn write_outputs(dir: &Path, exp: &Experiment, results: &[TrialResult]) -> Result<Summary> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let (rows, summary) = summarize(exp, results);
    write_file(&dir.join("trace.csv"), trace_csv(results).as_bytes())?;
    write_file(&dir.join("aggregate.csv"), aggregate_csv(&rows).as_bytes())?;
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&dir.join("summary.json"), json.as_bytes())?;
    Ok(summary)
}

/// Records what finished before a trial failed.
pub fn write_partial(dir: &Path, exp: &Experiment, failure: &PartialFailure) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let doc = serde_json::json!({
        "config": exp.config,
        "failed_trial": failure.trial,
        "error": failure.error.to_string(),
        "completed": failure.completed.iter().map(|r| &r.summary).collect::<Vec<_>>(),
    });
    let json = serde_json::to_string_pretty(&doc).expect("partial summary serializes");
    write_file(&dir.join("partial.json"), json.as_bytes())
}
