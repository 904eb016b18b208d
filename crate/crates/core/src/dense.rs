//! Column-major dense matrices and vectors with the handful of kernels the
//! solvers need.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};
use crate::scalar::Scalar;

/// Dense real matrix stored column-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Dense real vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseVector<T> {
    data: Vec<T>,
}

fn check_finite<T: Scalar>(what: &'static str, data: &[T]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

#[inline]
pub(crate) fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

impl<T: Scalar> DenseMatrix<T> {
    /// Builds a matrix from column-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(dim_mismatch("DenseMatrix::new", rows * cols, data.len()));
        }
        check_finite("matrix", &data)?;
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_slice(rows: usize, cols: usize, values: &[T]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(dim_mismatch("DenseMatrix::from_row_slice", rows * cols, values.len()));
        }
        let mut data = vec![T::zero(); rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                data[j * rows + i] = values[i * cols + j];
            }
        }
        Self::new(rows, cols, data)
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![T::zero(); rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    /// `rows x cols` matrix with `values` on the leading diagonal.
    pub fn from_diagonal(rows: usize, cols: usize, values: &[T]) -> Result<Self> {
        if values.len() > rows.min(cols) {
            return Err(dim_mismatch("DenseMatrix::from_diagonal", rows.min(cols), values.len()));
        }
        check_finite("diagonal", values)?;
        let mut m = Self::zeros(rows, cols);
        for (i, v) in values.iter().enumerate() {
            m.data[i * rows + i] = *v;
        }
        Ok(m)
    }

    /// Entry-wise constructor. Panics if `f` produces a non-finite value.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                let v = f(i, j);
                assert!(v.is_finite(), "non-finite entry at ({i}, {j})");
                data.push(v);
            }
        }
        Self::from_raw(rows, cols, data)
    }

    /// Stacks the given columns side by side.
    pub fn from_columns(rows: usize, columns: &[DenseVector<T>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            if c.len() != rows {
                return Err(dim_mismatch("DenseMatrix::from_columns", rows, c.len()));
            }
            data.extend_from_slice(c.as_slice());
        }
        Ok(Self::from_raw(rows, columns.len(), data))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    /// Column-major backing storage.
    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub(crate) fn col_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Mutable views of two distinct columns `p < q`.
    pub(crate) fn two_cols_mut(&mut self, p: usize, q: usize) -> (&mut [T], &mut [T]) {
        assert!(p < q && q < self.cols);
        let rows = self.rows;
        let (lo, hi) = self.data.split_at_mut(q * rows);
        (&mut lo[p * rows..(p + 1) * rows], &mut hi[..rows])
    }

    pub fn row(&self, i: usize) -> DenseVector<T> {
        DenseVector::from_raw((0..self.cols).map(|j| self[(i, j)]).collect())
    }

    pub fn column(&self, j: usize) -> DenseVector<T> {
        DenseVector::from_raw(self.col(j).to_vec())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Vec::with_capacity(self.data.len());
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.push(self.data[j * self.rows + i]);
            }
        }
        Self::from_raw(self.cols, self.rows, out)
    }

    /// Copies the listed rows, in the given order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.rows) {
            return Err(Error::InvalidIndices(format!(
                "row {bad} out of range for {} rows",
                self.rows
            )));
        }
        let k = indices.len();
        let mut data = Vec::with_capacity(k * self.cols);
        for j in 0..self.cols {
            let col = self.col(j);
            data.extend(indices.iter().map(|&i| col[i]));
        }
        Ok(Self::from_raw(k, self.cols, data))
    }

    /// Copies the listed columns into a new matrix.
    pub fn select_cols(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&j| j >= self.cols) {
            return Err(Error::InvalidIndices(format!(
                "column {bad} out of range for {} columns",
                self.cols
            )));
        }
        let mut data = Vec::with_capacity(indices.len() * self.rows);
        for &j in indices {
            data.extend_from_slice(self.col(j));
        }
        Ok(Self::from_raw(self.rows, indices.len(), data))
    }

    /// Stacks `self` on top of `below`.
    pub fn vstack(&self, below: &Self) -> Result<Self> {
        if self.cols != below.cols {
            return Err(dim_mismatch("DenseMatrix::vstack", self.cols, below.cols));
        }
        let rows = self.rows + below.rows;
        let mut data = Vec::with_capacity(rows * self.cols);
        for j in 0..self.cols {
            data.extend_from_slice(self.col(j));
            data.extend_from_slice(below.col(j));
        }
        Ok(Self::from_raw(rows, self.cols, data))
    }

    /// Places `right` to the right of `self`.
    pub fn hstack(&self, right: &Self) -> Result<Self> {
        if self.rows != right.rows {
            return Err(dim_mismatch("DenseMatrix::hstack", self.rows, right.rows));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&right.data);
        Ok(Self::from_raw(self.rows, self.cols + right.cols, data))
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(dim_mismatch(
                "matmul",
                format!("lhs cols {}", self.cols),
                format!("rhs rows {}", rhs.rows),
            ));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for j in 0..rhs.cols {
            let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for (k, &b) in rhs.col(j).iter().enumerate() {
                if b != T::zero() {
                    axpy(b, &self.data[k * self.rows..(k + 1) * self.rows], dst);
                }
            }
        }
        Ok(out)
    }

    /// `self^T * rhs` without forming the transpose.
    pub fn tr_matmul(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(dim_mismatch("tr_matmul", self.rows, rhs.rows));
        }
        let mut out = Self::zeros(self.cols, rhs.cols);
        for j in 0..rhs.cols {
            for i in 0..self.cols {
                out.data[j * self.cols + i] = dot(self.col(i), rhs.col(j));
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &DenseVector<T>) -> Result<DenseVector<T>> {
        if v.len() != self.cols {
            return Err(dim_mismatch("matvec", self.cols, v.len()));
        }
        let mut out = vec![T::zero(); self.rows];
        for (j, &x) in v.data.iter().enumerate() {
            if x != T::zero() {
                axpy(x, self.col(j), &mut out);
            }
        }
        Ok(DenseVector::from_raw(out))
    }

    /// `self^T * v`.
    pub fn matvec_t(&self, v: &DenseVector<T>) -> Result<DenseVector<T>> {
        if v.len() != self.rows {
            return Err(dim_mismatch("matvec_t", self.rows, v.len()));
        }
        Ok(DenseVector::from_raw(
            (0..self.cols).map(|j| dot(self.col(j), &v.data)).collect(),
        ))
    }

    /// Squared Euclidean norm of every row.
    pub fn gram_row_norms(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows];
        for j in 0..self.cols {
            for (o, &v) in out.iter_mut().zip(self.col(j)) {
                *o += v * v;
            }
        }
        out
    }

    pub fn frobenius_norm_sq(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> T {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        if self.shape() != rhs.shape() {
            return Err(dim_mismatch(
                "sub",
                format!("{:?}", self.shape()),
                format!("{:?}", rhs.shape()),
            ));
        }
        Ok(Self::from_raw(
            self.rows,
            self.cols,
            self.data.iter().zip(&rhs.data).map(|(a, b)| *a - *b).collect(),
        ))
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        if self.shape() != rhs.shape() {
            return Err(dim_mismatch(
                "add",
                format!("{:?}", self.shape()),
                format!("{:?}", rhs.shape()),
            ));
        }
        Ok(Self::from_raw(
            self.rows,
            self.cols,
            self.data.iter().zip(&rhs.data).map(|(a, b)| *a + *b).collect(),
        ))
    }

    pub fn scaled(&self, alpha: T) -> Self {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|&v| alpha * v).collect())
    }

    /// Converts between scalar types (e.g. `f64` to `f32`).
    pub fn cast<U: Scalar>(&self) -> DenseMatrix<U> {
        DenseMatrix::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        )
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

impl<T: Scalar> DenseVector<T> {
    /// Wraps `data`, rejecting non-finite entries.
    pub fn new(data: Vec<T>) -> Result<Self> {
        check_finite("vector", &data)?;
        Ok(Self { data })
    }

    pub(crate) fn from_raw(data: Vec<T>) -> Self {
        Self { data }
    }

    pub fn zeros(len: usize) -> Self {
        Self::from_raw(vec![T::zero(); len])
    }

    /// Panics if `f` produces a non-finite value.
    pub fn from_fn(len: usize, f: impl FnMut(usize) -> T) -> Self {
        let data: Vec<T> = (0..len).map(f).collect();
        assert!(data.iter().all(|v| v.is_finite()), "non-finite vector entry");
        Self::from_raw(data)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub(crate) fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn dot(&self, other: &Self) -> T {
        dot(&self.data, &other.data)
    }

    pub fn norm_sq(&self) -> T {
        dot(&self.data, &self.data)
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: T, x: &Self) {
        axpy(alpha, &x.data, &mut self.data);
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len(), "vector length mismatch");
        Self::from_raw(self.data.iter().zip(&other.data).map(|(a, b)| *a - *b).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len(), "vector length mismatch");
        Self::from_raw(self.data.iter().zip(&other.data).map(|(a, b)| *a + *b).collect())
    }

    pub fn scaled(&self, alpha: T) -> Self {
        Self::from_raw(self.data.iter().map(|&v| alpha * v).collect())
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidIndices(format!(
                "entry {bad} out of range for length {}",
                self.len()
            )));
        }
        Ok(Self::from_raw(indices.iter().map(|&i| self.data[i]).collect()))
    }

    pub fn cast<U: Scalar>(&self) -> DenseVector<U> {
        DenseVector::from_raw(self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect())
    }
}

impl<T> Index<usize> for DenseVector<T> {
    type Output = T;
    #[inline]
    fn index(&self, i: usize) -> &T {
        &self.data[i]
    }
}
