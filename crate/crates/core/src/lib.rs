//! Subspace-constrained randomized iterative solvers for consistent linear
//! systems `Ax = b`.
//!
//! A subset `I_p` of rows is enforced exactly at every iterate; the remaining
//! rows `I_r` are handled by randomized sketching, either with a relaxed
//! projection step (SCRIM) or with truncated Gram-Schmidt directions
//! (SC-IS-Krylov). Everything is generic over [`Scalar`] (`f32`, `f64`);
//! the aliases below fix `f64`.

pub mod constraint;
pub mod dense;
pub mod error;
pub mod linalg;
pub mod matgen;
pub mod rng;
pub mod sampling;
pub mod scalar;
pub mod select;
pub mod solver;
pub mod theory;

pub use constraint::{build_constraint, qr_like_factorize, ConstraintFactor, IndexPartition, QrLikeFactorization};
pub use dense::{DenseMatrix, DenseVector};
pub use error::{Error, Result};
pub use linalg::DEFAULT_RANK_TOL;
pub use sampling::{make_partition_space, FiniteSpace, PartitionSpace, SingleRowSpace, SketchDraw, SketchSpace};
pub use scalar::Scalar;
pub use select::{SelectionConfig, SelectionMethod};
pub use solver::{
    run, Algorithm, KrylovConfig, NullTol, Problem, RunStatus, RunTrace, ScrimConfig, SolverState, TraceOptions,
};
pub use theory::RateReport;

pub type Matrix = DenseMatrix<f64>;
pub type Vector = DenseVector<f64>;
pub type Factor = ConstraintFactor<f64>;
pub type State = SolverState<f64>;
