//! Seeded random streams and Gaussian fills.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 generator
//! addressed by `(seed, stream)`, so independent trials can run on separate
//! streams of the same seed and still replay bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dense::{DenseMatrix, DenseVector};
use crate::scalar::Scalar;

/// The generator type used throughout.
pub type SolverRng = ChaCha8Rng;

/// Well-known stream ids, so that e.g. the partition draw and the iteration
/// draws of one trial never share a stream.
pub mod streams {
    pub const PARTITION: u64 = 0;
    pub const ITERATION: u64 = 1;
    pub const SELECTION: u64 = 2;
    pub const MATRIX: u64 = 3;
    pub const RHS: u64 = 4;
}

pub fn stream_rng(seed: u64, stream: u64) -> SolverRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normal<T: Scalar>(rng: &mut SolverRng) -> T {
    let v: f64 = StandardNormal.sample(rng);
    T::lit(v)
}

/// `rows x cols` matrix of i.i.d. standard normals, filled column by column.
pub fn gaussian_matrix<T: Scalar>(rows: usize, cols: usize, rng: &mut SolverRng) -> DenseMatrix<T> {
    let data = (0..rows * cols).map(|_| standard_normal(rng)).collect();
    DenseMatrix::from_raw(rows, cols, data)
}

pub fn gaussian_vector<T: Scalar>(len: usize, rng: &mut SolverRng) -> DenseVector<T> {
    DenseVector::from_raw((0..len).map(|_| standard_normal(rng)).collect())
}

/// Product of two Gaussian factors: an `rows x cols` matrix of rank
/// `min(rank, rows, cols)` almost surely.
pub fn low_rank_gaussian<T: Scalar>(
    rows: usize,
    cols: usize,
    rank: usize,
    rng: &mut SolverRng,
) -> DenseMatrix<T> {
    let left = gaussian_matrix::<T>(rows, rank, rng);
    let right = gaussian_matrix::<T>(rank, cols, rng);
    left.matmul(&right).expect("inner dimensions agree")
}

/// Draws an index with probability proportional to `weights[i]`.
///
/// Returns `None` when no weight is positive. Zero-weight entries are never
/// returned.
pub fn weighted_index(weights: &[f64], rng: &mut SolverRng) -> Option<usize> {
    use rand::Rng;
    let total: f64 = weights.iter().filter(|w| **w > 0.0).sum();
    if !(total > 0.0) {
        return None;
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = Some(i);
            if target < acc {
                return Some(i);
            }
        }
    }
    last_positive
}
