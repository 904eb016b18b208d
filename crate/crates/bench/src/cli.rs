//! The `scsolve` command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scsolve_core::linalg::pinv_solve_least_norm;
use scsolve_core::matgen::{generate, make_consistent_system, ClusterSpec, DEFAULT_R_L, DEFAULT_R_S};
use scsolve_core::select::{id_error, select, SelectionDocument};
use scsolve_core::theory::rate_report;
use scsolve_core::{build_constraint, DenseVector, SelectionConfig, SelectionMethod, TraceOptions, DEFAULT_RANK_TOL};

use crate::config::{AlgorithmSpec, ExperimentConfig, SamplerSpec, DEFAULT_REFERENCE_CAP};
use crate::error::{BenchError, Result};
use crate::experiment::{make_space, run_trial, trace_csv, write_outputs, write_partial, Experiment};
use crate::format::fmt_f64;
use crate::mm::{read_indices, read_matrix_market, read_vector, write_file, write_matrix_market, write_vector};

#[derive(Debug, Parser)]
#[command(name = "scsolve", version, about = "Subspace-constrained randomized solvers for Ax = b")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a matrix with clustered singular values.
    Matgen(MatgenArgs),
    /// Choose constraint rows.
    Select(SelectArgs),
    /// Run one seeded solve.
    Solve(SolveArgs),
    /// Run a multi-trial experiment from a config file.
    Bench(BenchArgs),
    /// Print the exact convergence factor of a setup.
    Rate(RateArgs),
}

fn parse_interval(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("expected LO,HI, got {s:?}"))?;
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok((p(lo)?, p(hi)?))
}

/// Krylov truncation parameter; `None` (spelled `inf`) keeps every
/// direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ell(pub Option<usize>);

fn parse_ell(s: &str) -> std::result::Result<Ell, String> {
    match s {
        "inf" | "unbounded" => Ok(Ell(None)),
        _ => s.parse::<usize>().map(|l| Ell(Some(l))).map_err(|e| format!("{s:?}: {e}")),
    }
}

#[derive(Debug, Args)]
pub struct MatgenArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub r: usize,
    #[arg(long)]
    pub nl: usize,
    #[arg(long)]
    pub ns: usize,
    #[arg(long)]
    pub kappa_m: f64,
    /// Small cluster interval, LO,HI.
    #[arg(long, value_parser = parse_interval)]
    pub rs: Option<(f64, f64)>,
    /// Middle cluster interval, LO,HI.
    #[arg(long, value_parser = parse_interval)]
    pub rm: Option<(f64, f64)>,
    /// Large cluster interval, LO,HI.
    #[arg(long, value_parser = parse_interval)]
    pub rl: Option<(f64, f64)>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Matrix Market output; the metadata goes to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a consistent right-hand side `b = A x` here.
    #[arg(long)]
    pub rhs_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub method: SelectionMethod,
    #[arg(long)]
    pub mp: usize,
    #[arg(long)]
    pub sketch_cols: Option<usize>,
    #[arg(long)]
    pub block_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Selection document path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Scrim,
    Krylov,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    #[value(name = "single_row", alias = "single-row")]
    SingleRow,
    Partition,
}

#[derive(Debug, Args)]
pub struct SystemArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    /// Right-hand side, one value per line.
    #[arg(long)]
    pub rhs: Option<PathBuf>,
    /// Constraint rows: `none`, a selection document, or one zero-based
    /// index per line.
    #[arg(long, default_value = "none")]
    pub ip: String,
    #[arg(long, value_enum, default_value = "partition")]
    pub sampler: SamplerArg,
    /// Block size of the partition sampler.
    #[arg(long)]
    pub q: Option<usize>,
}

impl SystemArgs {
    fn sampler(&self) -> Result<SamplerSpec> {
        match (self.sampler, self.q) {
            (SamplerArg::SingleRow, _) => Ok(SamplerSpec::SingleRow),
            (SamplerArg::Partition, Some(q)) if q > 0 => Ok(SamplerSpec::Partition { q }),
            (SamplerArg::Partition, _) => Err(BenchError::Usage("--sampler partition needs --q >= 1".into())),
        }
    }

    fn i_p(&self) -> Result<Vec<usize>> {
        if self.ip == "none" {
            Ok(Vec::new())
        } else {
            read_indices(Path::new(&self.ip))
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, value_enum, default_value = "krylov")]
    pub algo: AlgoArg,
    #[arg(long, default_value_t = 1.0)]
    pub zeta: f64,
    /// Krylov truncation parameter, or `inf`.
    #[arg(long, value_parser = parse_ell, default_value = "10")]
    pub ell: Ell,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trace CSV output.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Largest `m * n` for which the reference solution `A^+ b` is formed.
    #[arg(long, default_value_t = DEFAULT_REFERENCE_CAP)]
    pub reference_cap: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; the rayon default when absent.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, default_value_t = 1.0)]
    pub zeta: f64,
    /// Seed of the random partition.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Matgen(a) => matgen(a),
        Command::Select(a) => select_rows(a),
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
        Command::Rate(a) => rate(a),
    }
}

fn matgen(args: MatgenArgs) -> Result<()> {
    let mut spec = ClusterSpec::with_default_ranges(args.m, args.n, args.r, args.nl, args.ns, args.kappa_m, args.seed);
    spec.r_s = args.rs.unwrap_or(DEFAULT_R_S);
    spec.r_l = args.rl.unwrap_or(DEFAULT_R_L);
    if let Some(rm) = args.rm {
        spec.r_m = rm;
    }
    spec.validate().map_err(|e| BenchError::Usage(format!("invalid matrix spec: {e}")))?;
    let g = generate::<f64>(&spec)?;
    write_matrix_market(&args.out, &g.a, Some(&format!("scsolve matgen seed {}", spec.seed)))?;
    let meta = serde_json::json!({
        "spec": spec,
        "singular_value_sampling": "uniform",
        "sigma": g.sigma,
    });
    let mut meta_path = args.out.clone().into_os_string();
    meta_path.push(".json");
    write_file(Path::new(&meta_path), serde_json::to_string_pretty(&meta).expect("metadata").as_bytes())?;
    if let Some(p) = args.rhs_out {
        let sys = make_consistent_system(&g.a, spec.seed, DEFAULT_RANK_TOL)?;
        write_vector(&p, &sys.b)?;
    }
    Ok(())
}

fn select_rows(args: SelectArgs) -> Result<()> {
    let a = read_matrix_market(&args.input)?;
    let cfg = SelectionConfig {
        sketch_cols: args.sketch_cols,
        block_size: args.block_size,
        ..SelectionConfig::new(args.method, args.mp, args.seed)
    };
    let sel = select(&a, &cfg, DEFAULT_RANK_TOL)?;
    let err = id_error(&a, &sel.indices, DEFAULT_RANK_TOL)?;
    let doc = SelectionDocument {
        method: cfg.method,
        m_p: cfg.m_p,
        indices: sel.indices,
        seed: cfg.seed,
        achieved_id_error: err,
        truncated: sel.truncated,
        notes: sel.notes,
    };
    let json = serde_json::to_string_pretty(&doc).expect("selection document");
    match args.out {
        Some(p) => write_file(&p, json.as_bytes()),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn load_system(sys: &SystemArgs) -> Result<(scsolve_core::Matrix, DenseVector<f64>)> {
    let a = read_matrix_market(&sys.matrix)?;
    let b = match &sys.rhs {
        Some(p) => read_vector(p)?,
        None => DenseVector::zeros(a.rows()),
    };
    if b.len() != a.rows() {
        return Err(BenchError::Data(format!(
            "right-hand side has {} entries, matrix has {} rows",
            b.len(),
            a.rows()
        )));
    }
    Ok((a, b))
}

fn solve(args: SolveArgs) -> Result<()> {
    if args.system.rhs.is_none() {
        return Err(BenchError::Usage("solve needs --rhs".into()));
    }
    let (a, b) = load_system(&args.system)?;
    let sampler = args.system.sampler()?;
    let i_p = args.system.i_p()?;
    let spec = match args.algo {
        AlgoArg::Scrim => AlgorithmSpec::Scrim { zeta: args.zeta },
        AlgoArg::Krylov => AlgorithmSpec::Krylov { ell: args.ell.0 },
    };
    let algo = spec.to_algorithm(args.tol, args.max_iters);
    algo.validate()?;
    let x_star = if a.rows() * a.cols() <= args.reference_cap {
        Some(pinv_solve_least_norm(&a, &b, DEFAULT_RANK_TOL)?)
    } else {
        None
    };
    let start = Instant::now();
    let r = run_trial(&a, &b, &i_p, sampler, &algo, args.seed, &TraceOptions::default(), x_star.as_ref())?;
    let elapsed = start.elapsed();
    if let Some(p) = &args.trace {
        write_file(p, trace_csv(std::slice::from_ref(&r)).as_bytes())?;
    }
    let s = &r.summary;
    println!("algorithm: {}", algo.name());
    println!("status: {}", s.status);
    println!("iterations: {}", s.iterations);
    println!("full_iterations: {}", fmt_f64(s.full_iterations));
    match s.final_rse {
        Some(v) => println!("final_rse: {}", fmt_f64(v)),
        None => println!("final_rse: unavailable (no reference solution)"),
    }
    if let Some(v) = s.final_residual {
        println!("final_residual: {}", fmt_f64(v));
    }
    if let Some(why) = &s.stall_reason {
        println!("stall_reason: {why}");
    }
    println!("wall_seconds: {}", fmt_f64(elapsed.as_secs_f64()));
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let config = ExperimentConfig::load(&args.config)?;
    let exp = Experiment::prepare(config)?;
    let start = Instant::now();
    let outcome = match args.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| BenchError::Usage(format!("cannot build a pool of {t} threads: {e}")))?
            .install(|| exp.run_all()),
        None => exp.run_all(),
    };
    match outcome {
        Ok(results) => {
            let s = write_outputs(&args.out, &exp, &results)?;
            println!("trials: {}", results.len());
            println!("converged: {}", s.converged);
            println!("mean_iterations: {}", fmt_f64(s.mean_iterations));
            println!("median_iterations: {}", fmt_f64(s.median_iterations));
            println!("mean_full_iterations: {}", fmt_f64(s.mean_full_iterations));
            eprintln!("wall_seconds: {}", fmt_f64(start.elapsed().as_secs_f64()));
            Ok(())
        }
        Err(f) => {
            write_partial(&args.out, &exp, &f)?;
            Err(BenchError::Data(format!(
                "trial {} failed: {}; {} completed trials recorded in partial.json",
                f.trial,
                f.error,
                f.completed.len()
            )))
        }
    }
}

fn rate(args: RateArgs) -> Result<()> {
    let (a, b) = load_system(&args.system)?;
    let sampler = args.system.sampler()?;
    let i_p = args.system.i_p()?;
    let report_for = |i_p: &[usize]| -> Result<scsolve_core::RateReport> {
        let factor = build_constraint(&a, &b, i_p, DEFAULT_RANK_TOL)?;
        let a_ir = a.select_rows(factor.partition().i_r())?;
        if a_ir.rows() == 0 {
            return Err(BenchError::Usage("I_p covers every row, nothing is left to sample".into()));
        }
        let a_ir_p = factor.reduced_matrix(&a, DEFAULT_RANK_TOL)?;
        let space = make_space(&a_ir, &a_ir_p, sampler, args.seed)?;
        Ok(rate_report(space.as_ref(), &a_ir_p, args.zeta, DEFAULT_RANK_TOL)?)
    };
    let mut report = report_for(&i_p)?;
    report.rho_tilde = if i_p.is_empty() { report.rho } else { report_for(&[])?.rho };
    println!("{}", serde_json::to_string_pretty(&report).expect("rate report"));
    Ok(())
}
