//! Experiment description read by `scsolve bench`.

use std::fs;
use std::path::{Path, PathBuf};

use scsolve_core::matgen::ClusterSpec;
use scsolve_core::solver::{Algorithm, KrylovConfig, ScrimConfig};
use scsolve_core::{SelectionConfig, SelectionMethod};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Above this many entries no dense reference solution is formed and runs
/// stop on the relative residual instead.
pub const DEFAULT_REFERENCE_CAP: usize = 2_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSource {
    File(PathBuf),
    Generate(ClusterSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RhsSource {
    File(PathBuf),
    /// `b = A x` with `x` standard normal from this seed.
    Generate { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SelectionSpec {
    None,
    Indices(Vec<usize>),
    /// Randomized strategies are redrawn per trial with seed
    /// `strategy.seed + trial`.
    Strategy(SelectionConfig),
}

impl SelectionSpec {
    /// True when every trial sees the same `I_p`.
    pub fn is_fixed(&self) -> bool {
        match self {
            SelectionSpec::None | SelectionSpec::Indices(_) => true,
            SelectionSpec::Strategy(c) => matches!(c.method, SelectionMethod::Cpqr | SelectionMethod::Svd),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerSpec {
    /// Rows of `A_Ir P` with squared-norm probabilities.
    SingleRow,
    /// A random partition of `I_r` into blocks of `q` rows with Frobenius
    /// probabilities, redrawn per trial.
    Partition { q: usize },
}

impl SamplerSpec {
    pub fn block_size(&self) -> usize {
        match self {
            SamplerSpec::SingleRow => 1,
            SamplerSpec::Partition { q } => *q,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    Scrim { zeta: f64 },
    /// `ell = null` keeps every direction.
    Krylov { ell: Option<usize> },
}

impl AlgorithmSpec {
    pub fn to_algorithm(&self, rse_tol: f64, max_iters: usize) -> Algorithm {
        match *self {
            AlgorithmSpec::Scrim { zeta } => Algorithm::Scrim(ScrimConfig {
                zeta,
                rse_tol,
                max_iters,
                ..ScrimConfig::default()
            }),
            AlgorithmSpec::Krylov { ell } => Algorithm::Krylov(KrylovConfig {
                ell,
                rse_tol,
                max_iters,
                ..KrylovConfig::default()
            }),
        }
    }
}

fn default_reference_cap() -> usize {
    DEFAULT_REFERENCE_CAP
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub matrix: MatrixSource,
    pub rhs: RhsSource,
    pub selection: SelectionSpec,
    pub sampler: SamplerSpec,
    pub algorithm: AlgorithmSpec,
    pub trials: usize,
    pub rse_tol: f64,
    pub max_iters: usize,
    pub base_seed: u64,
    #[serde(default = "default_reference_cap")]
    pub reference_size_cap: usize,
    /// Record `||A x - b||` in the trace.
    #[serde(default = "default_true")]
    pub record_residual: bool,
}

impl ExperimentConfig {
    /// Parses `path`, resolving relative file references against its
    /// directory, and validates the result.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| BenchError::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let MatrixSource::File(p) = &mut cfg.matrix {
            resolve(p);
        }
        if let RhsSource::File(p) = &mut cfg.rhs {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(BenchError::Usage(m));
        if self.trials == 0 {
            return usage("trials must be at least 1".into());
        }
        if !(self.rse_tol > 0.0) {
            return usage(format!("rse_tol = {} must be positive", self.rse_tol));
        }
        if let SamplerSpec::Partition { q: 0 } = self.sampler {
            return usage("partition block size q must be at least 1".into());
        }
        if !self.record_residual && self.reference_size_cap == 0 {
            return usage("record_residual = false needs a reference solution".into());
        }
        for p in [&self.matrix_path(), &self.rhs_path()].into_iter().flatten() {
            if !p.is_file() {
                return usage(format!("{} does not exist", p.display()));
            }
        }
        if let MatrixSource::Generate(spec) = &self.matrix {
            spec.validate()?;
        }
        self.algorithm.to_algorithm(self.rse_tol, self.max_iters).validate()?;
        Ok(())
    }

    fn matrix_path(&self) -> Option<PathBuf> {
        match &self.matrix {
            MatrixSource::File(p) => Some(p.clone()),
            MatrixSource::Generate(_) => None,
        }
    }

    fn rhs_path(&self) -> Option<PathBuf> {
        match &self.rhs {
            RhsSource::File(p) => Some(p.clone()),
            RhsSource::Generate { .. } => None,
        }
    }
}
