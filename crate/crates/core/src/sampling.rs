//! Probability spaces of sketching matrices `S` acting on the `m_r`
//! remaining rows.
//!
//! Row and block sketches are column selections of the identity and are
//! applied by index extraction; dense atoms are stored explicitly.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::linalg::sym_lambda_min;
use crate::rng::{stream_rng, streams, SolverRng};
use crate::scalar::Scalar;

/// Tolerance on the total probability mass of a space.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Spaces with more atoms than this use the fixed resample budget.
const LARGE_SPACE_ATOMS: usize = 10_000;

/// One realization of `S`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SketchDraw<'a, T> {
    /// `S = e_i`.
    Row(usize),
    /// `S = [e_i]_{i in block}`; may be empty.
    Block(&'a [usize]),
    /// Explicit `m_r x q` matrix.
    Dense(&'a DenseMatrix<T>),
}

impl<'a, T: Scalar> SketchDraw<'a, T> {
    /// Number of columns of `S`.
    pub fn width(&self) -> usize {
        match self {
            SketchDraw::Row(_) => 1,
            SketchDraw::Block(ix) => ix.len(),
            SketchDraw::Dense(s) => s.cols(),
        }
    }

    /// Row indices selected by an index-type draw; `None` for dense draws.
    pub fn indices(&self) -> Option<&[usize]> {
        match self {
            SketchDraw::Row(i) => Some(std::slice::from_ref(i)),
            SketchDraw::Block(ix) => Some(ix),
            SketchDraw::Dense(_) => None,
        }
    }

    /// `S^T v` for `v` of length `m_r`.
    pub fn apply_t(&self, v: &[T]) -> Vec<T> {
        match self {
            SketchDraw::Row(i) => vec![v[*i]],
            SketchDraw::Block(ix) => ix.iter().map(|&i| v[i]).collect(),
            SketchDraw::Dense(s) => (0..s.cols())
                .map(|j| s.col(j).iter().zip(v).map(|(&a, &b)| a * b).sum())
                .collect(),
        }
    }

    /// `S w` as a length-`m_r` vector.
    pub fn apply(&self, w: &[T], m_r: usize) -> Vec<T> {
        let mut out = vec![T::zero(); m_r];
        match self {
            SketchDraw::Row(i) => out[*i] = w[0],
            SketchDraw::Block(ix) => {
                for (&i, &v) in ix.iter().zip(w) {
                    out[i] = v;
                }
            }
            SketchDraw::Dense(s) => {
                for (j, &c) in w.iter().enumerate() {
                    for (o, &v) in out.iter_mut().zip(s.col(j)) {
                        *o += c * v;
                    }
                }
            }
        }
        out
    }

    /// Materializes `S` as an `m_r x width` matrix.
    pub fn to_dense(&self, m_r: usize) -> DenseMatrix<T> {
        match self {
            SketchDraw::Dense(s) => (*s).clone(),
            _ => {
                let ix = self.indices().expect("index draw");
                let mut s = DenseMatrix::zeros(m_r, ix.len());
                for (j, &i) in ix.iter().enumerate() {
                    s[(i, j)] = T::one();
                }
                s
            }
        }
    }
}

/// A probability space `(Omega, P)` of sketching matrices.
pub trait SketchSpace<T: Scalar>: Send + Sync {
    /// `m_r`, the row dimension of every `S`.
    fn dim(&self) -> usize;

    /// One i.i.d. draw.
    fn draw(&self, rng: &mut SolverRng) -> SketchDraw<'_, T>;

    /// Number of atoms if the space is finite and listable.
    fn atom_count(&self) -> Option<usize> {
        None
    }

    /// All atoms with their probabilities.
    fn atoms(&self) -> Result<Vec<(SketchDraw<'_, T>, f64)>> {
        Err(Error::NotEnumerable)
    }
}

/// Complete atom list of an enumerable space.
pub fn enumerate_atoms<T: Scalar, S: SketchSpace<T> + ?Sized>(
    space: &S,
) -> Result<Vec<(SketchDraw<'_, T>, f64)>> {
    space.atoms()
}

/// Default resample budget: 50 per atom, or 50 * 50 for large or procedural
/// spaces.
pub fn default_max_resample<T: Scalar, S: SketchSpace<T> + ?Sized>(space: &S) -> usize {
    match space.atom_count() {
        Some(c) if c > 0 && c <= LARGE_SPACE_ATOMS => 50 * c,
        _ => 50 * 50,
    }
}

fn categorical(probs: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(probs.iter().copied())
        .map_err(|e| Error::InvalidParameter(format!("sampling weights: {e}")))
}

fn normalize(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidParameter(
            "sampling weights must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidParameter("all sampling weights are zero".into()));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// `Omega = {e_i}` with `P(e_i)` proportional to a squared row norm.
#[derive(Clone, Debug)]
pub struct SingleRowSpace {
    probs: Vec<f64>,
    dist: WeightedIndex<f64>,
}

impl SingleRowSpace {
    /// Builds the space from squared row norms.
    pub fn from_sq_norms(sq_norms: &[f64]) -> Result<Self> {
        let probs = normalize(sq_norms)?;
        let dist = categorical(&probs)?;
        Ok(Self { probs, dist })
    }

    /// Probabilities proportional to the squared rows of `a` (typically
    /// `A_Ir P`).
    pub fn from_rows<T: Scalar>(a: &DenseMatrix<T>) -> Result<Self> {
        let w: Vec<f64> = a.gram_row_norms().iter().map(|v| v.to_f64_lossy()).collect();
        Self::from_sq_norms(&w)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Single-row sampling with probabilities `norms[i]^2 / sum norms^2`.
pub fn make_single_row_space(row_norms: &[f64]) -> Result<SingleRowSpace> {
    let sq: Vec<f64> = row_norms.iter().map(|v| v * v).collect();
    SingleRowSpace::from_sq_norms(&sq)
}

impl<T: Scalar> SketchSpace<T> for SingleRowSpace {
    fn dim(&self) -> usize {
        self.probs.len()
    }

    fn draw(&self, rng: &mut SolverRng) -> SketchDraw<'_, T> {
        SketchDraw::Row(self.dist.sample(rng))
    }

    fn atom_count(&self) -> Option<usize> {
        Some(self.probs.len())
    }

    fn atoms(&self) -> Result<Vec<(SketchDraw<'_, T>, f64)>> {
        Ok(self.probs.iter().enumerate().map(|(i, &p)| (SketchDraw::Row(i), p)).collect())
    }
}

/// A fixed partition of `[m_r]` into blocks, one block drawn per iteration.
#[derive(Clone, Debug)]
pub struct PartitionSpace {
    m_r: usize,
    blocks: Vec<Vec<usize>>,
    probs: Vec<f64>,
    q: usize,
    seed: Option<u64>,
    dist: WeightedIndex<f64>,
}

impl PartitionSpace {
    /// Explicit blocks with explicit probabilities.
    ///
    /// Blocks must be disjoint and within `[m_r]`; empty blocks are allowed
    /// (they act as the zero sketch).
    pub fn from_blocks(m_r: usize, blocks: Vec<Vec<usize>>, probs: Vec<f64>) -> Result<Self> {
        if blocks.is_empty() || blocks.len() != probs.len() {
            return Err(Error::InvalidParameter(format!(
                "{} blocks but {} probabilities",
                blocks.len(),
                probs.len()
            )));
        }
        let mut seen = vec![false; m_r];
        for &i in blocks.iter().flatten() {
            if i >= m_r || seen[i] {
                return Err(Error::InvalidIndices(format!(
                    "block index {i} is out of range or repeated (m_r = {m_r})"
                )));
            }
            seen[i] = true;
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "block probabilities must be nonnegative and sum to 1 (sum = {sum})"
            )));
        }
        let dist = categorical(&probs)?;
        let q = blocks.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Self { m_r, blocks, probs, q, seed: None, dist })
    }

    /// Blocks with Frobenius-rule probabilities `||(A)_{I_i}||_F^2 / ||A||_F^2`.
    pub fn with_frobenius_probs<T: Scalar>(a: &DenseMatrix<T>, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let row_sq = a.gram_row_norms();
        let weights: Vec<f64> = blocks
            .iter()
            .map(|b| b.iter().map(|&i| row_sq.get(i).map_or(0.0, |v| v.to_f64_lossy())).sum())
            .collect();
        let probs = normalize(&weights)?;
        Self::from_blocks(a.rows(), blocks, probs)
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Nominal block size.
    pub fn q(&self) -> usize {
        self.q
    }

    /// Seed of the permutation, when drawn randomly.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Whether the blocks cover every row of `[m_r]`.
    pub fn covers(&self) -> bool {
        self.blocks.iter().map(Vec::len).sum::<usize>() == self.m_r
    }
}

/// Splits a uniformly random permutation of `[m_r]` (rows of `a_ir`) into
/// `ceil(m_r / q)` consecutive blocks of size `q` (the last may be shorter)
/// with Frobenius-rule probabilities.
pub fn make_partition_space<T: Scalar>(a_ir: &DenseMatrix<T>, q: usize, seed: u64) -> Result<PartitionSpace> {
    let m_r = a_ir.rows();
    if q == 0 || q > m_r {
        return Err(Error::InvalidParameter(format!(
            "block size q = {q} must lie in [1, {m_r}]"
        )));
    }
    let mut perm: Vec<usize> = (0..m_r).collect();
    let mut rng = stream_rng(seed, streams::PARTITION);
    perm.shuffle(&mut rng);
    let blocks: Vec<Vec<usize>> = perm
        .chunks(q)
        .map(|c| {
            let mut b = c.to_vec();
            b.sort_unstable();
            b
        })
        .collect();
    let mut space = PartitionSpace::with_frobenius_probs(a_ir, blocks)?;
    space.q = q;
    space.seed = Some(seed);
    Ok(space)
}

impl<T: Scalar> SketchSpace<T> for PartitionSpace {
    fn dim(&self) -> usize {
        self.m_r
    }

    fn draw(&self, rng: &mut SolverRng) -> SketchDraw<'_, T> {
        SketchDraw::Block(&self.blocks[self.dist.sample(rng)])
    }

    fn atom_count(&self) -> Option<usize> {
        Some(self.blocks.len())
    }

    fn atoms(&self) -> Result<Vec<(SketchDraw<'_, T>, f64)>> {
        Ok(self
            .blocks
            .iter()
            .zip(&self.probs)
            .map(|(b, &p)| (SketchDraw::Block(b.as_slice()), p))
            .collect())
    }
}

/// A finite space of explicit dense sketches.
#[derive(Clone, Debug)]
pub struct FiniteSpace<T> {
    m_r: usize,
    atoms: Vec<DenseMatrix<T>>,
    probs: Vec<f64>,
    dist: WeightedIndex<f64>,
}

impl<T: Scalar> FiniteSpace<T> {
    pub fn new(atoms: Vec<DenseMatrix<T>>, probs: Vec<f64>) -> Result<Self> {
        let m_r = atoms.first().map(DenseMatrix::rows).ok_or(Error::Empty("sketch atoms"))?;
        if atoms.len() != probs.len() || atoms.iter().any(|s| s.rows() != m_r) {
            return Err(Error::InvalidParameter(
                "atoms must share a row dimension and match the probability list".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "atom probabilities must be nonnegative and sum to 1 (sum = {sum})"
            )));
        }
        let dist = categorical(&probs)?;
        Ok(Self { m_r, atoms, probs, dist })
    }

    /// The one-atom space `{I}`.
    pub fn identity(m_r: usize) -> Result<Self> {
        Self::new(vec![DenseMatrix::identity(m_r)], vec![1.0])
    }
}

impl<T: Scalar> SketchSpace<T> for FiniteSpace<T> {
    fn dim(&self) -> usize {
        self.m_r
    }

    fn draw(&self, rng: &mut SolverRng) -> SketchDraw<'_, T> {
        SketchDraw::Dense(&self.atoms[self.dist.sample(rng)])
    }

    fn atom_count(&self) -> Option<usize> {
        Some(self.atoms.len())
    }

    fn atoms(&self) -> Result<Vec<(SketchDraw<'_, T>, f64)>> {
        Ok(self.atoms.iter().zip(&self.probs).map(|(s, &p)| (SketchDraw::Dense(s), p)).collect())
    }
}

/// `E[S S^T] = sum_atoms p S S^T` as an `m_r x m_r` matrix.
pub fn expected_sst<T: Scalar, S: SketchSpace<T> + ?Sized>(space: &S) -> Result<DenseMatrix<T>> {
    let m_r = space.dim();
    let mut out = DenseMatrix::zeros(m_r, m_r);
    for (draw, p) in space.atoms()? {
        let p = T::lit(p);
        if let Some(ix) = draw.indices() {
            for &i in ix {
                out[(i, i)] += p;
            }
        } else {
            let s = draw.to_dense(m_r);
            let sst = s.matmul(&s.transpose())?;
            for j in 0..m_r {
                for i in 0..m_r {
                    out[(i, j)] += p * sst[(i, j)];
                }
            }
        }
    }
    Ok(out)
}

/// Whether `E[S S^T]` is positive definite, i.e. its smallest eigenvalue
/// exceeds `tol` times its largest entry.
pub fn expectation_is_positive_definite<T: Scalar, S: SketchSpace<T> + ?Sized>(
    space: &S,
    tol: T,
) -> Result<bool> {
    let e = expected_sst(space)?;
    if e.is_empty() {
        return Ok(false);
    }
    Ok(sym_lambda_min(&e)? > tol * e.max_abs())
}
