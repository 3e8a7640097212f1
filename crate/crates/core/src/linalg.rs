//! Column-major dense matrix and a Householder QR least-squares solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense column-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Builds a matrix from column vectors of equal length.
    pub fn from_columns(columns: &[Vec<T>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * columns.len());
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(Error::InvalidDataset(format!(
                    "column {j} has {} rows, expected {rows}",
                    c.len()
                )));
            }
            data.extend_from_slice(c);
        }
        Ok(Self {
            rows,
            cols: columns.len(),
            data,
        })
    }

    /// Builds a matrix from row vectors of equal length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let q = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(n, q);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != q {
                return Err(Error::DimensionMismatch {
                    expected: q,
                    got: r.len(),
                });
            }
            for (j, &v) in r.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
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
    pub fn col(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> Vec<T> {
        (0..self.cols).map(|j| self[(i, j)]).collect()
    }

    pub fn push_column(&mut self, column: &[T]) -> Result<()> {
        if self.cols > 0 && column.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: column.len(),
            });
        }
        self.rows = column.len();
        self.data.extend_from_slice(column);
        self.cols += 1;
        Ok(())
    }

    /// Copy with the given subset of columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.rows * columns.len());
        for &j in columns {
            data.extend_from_slice(self.col(j));
        }
        Self {
            rows: self.rows,
            cols: columns.len(),
            data,
        }
    }

    /// Copy with the given subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for j in 0..self.cols {
            let c = self.col(j);
            data.extend(rows.iter().map(|&i| c[i]));
        }
        Self {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        let mut out = vec![T::zero(); self.rows];
        for (j, &b) in v.iter().enumerate() {
            if b == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.col(j)) {
                *o += a * b;
            }
        }
        out
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[j * self.rows + i]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[j * self.rows + i]
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Householder QR factorization of a tall matrix, without pivoting.
///
/// Reflector vectors are stored below the diagonal of `factors`; the diagonal
/// of R lives in `rdiag`.
#[derive(Debug, Clone)]
pub struct Qr<T> {
    factors: Matrix<T>,
    rdiag: Vec<T>,
}

impl<T: Scalar> Qr<T> {
    /// Factorizes `a` and rejects it if any pivot falls below
    /// `T::RANK_TOL * max|pivot|`.
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        let (n, q) = (a.rows(), a.cols());
        if q > n {
            return Err(Error::RankDeficient { column: n });
        }
        let mut f = a.clone();
        let mut rdiag = vec![T::zero(); q];
        for k in 0..q {
            let norm = f.col(k)[k..].iter().map(|&v| v * v).sum::<T>().sqrt();
            if norm == T::zero() {
                rdiag[k] = T::zero();
                continue;
            }
            let alpha = if f[(k, k)] > T::zero() { -norm } else { norm };
            // v = x - alpha e1, scaled so that H = I - v v^T / (v_k * -alpha)
            f[(k, k)] -= alpha;
            let vk = f[(k, k)];
            let denom = -alpha * vk;
            for j in (k + 1)..q {
                let (left, right) = f.data.split_at_mut(j * n);
                let v = &left[k * n + k..k * n + n];
                let c = &mut right[k..n];
                let s = dot(v, c) / denom;
                for (ci, &vi) in c.iter_mut().zip(v) {
                    *ci -= s * vi;
                }
            }
            rdiag[k] = alpha;
        }
        let max_pivot = rdiag.iter().fold(T::zero(), |m, &d| m.max(d.abs()));
        let tol = T::of(T::RANK_TOL) * max_pivot;
        if let Some(k) = rdiag.iter().position(|d| d.abs() <= tol) {
            return Err(Error::RankDeficient { column: k });
        }
        Ok(Self { factors: f, rdiag })
    }

    pub fn rows(&self) -> usize {
        self.factors.rows()
    }

    pub fn cols(&self) -> usize {
        self.factors.cols()
    }

    fn reflect(&self, k: usize, y: &mut [T]) {
        let n = self.rows();
        let v = &self.factors.col(k)[k..n];
        let denom = -self.rdiag[k] * v[0];
        let s = dot(v, &y[k..n]) / denom;
        for (yi, &vi) in y[k..n].iter_mut().zip(v) {
            *yi -= s * vi;
        }
    }

    /// Overwrites `y` with `Q^T y`.
    pub fn apply_qt(&self, y: &mut [T]) {
        for k in 0..self.cols() {
            self.reflect(k, y);
        }
    }

    /// Overwrites `y` with `Q y`.
    pub fn apply_q(&self, y: &mut [T]) {
        for k in (0..self.cols()).rev() {
            self.reflect(k, y);
        }
    }

    /// Least-squares coefficients for right-hand side `y`.
    pub fn solve(&self, y: &[T]) -> Vec<T> {
        let q = self.cols();
        let mut qty = y.to_vec();
        self.apply_qt(&mut qty);
        let mut beta = vec![T::zero(); q];
        for k in (0..q).rev() {
            let mut acc = qty[k];
            for j in (k + 1)..q {
                acc -= self.r(k, j) * beta[j];
            }
            beta[k] = acc / self.rdiag[k];
        }
        beta
    }

    /// Entry (i, j) of R for i <= j.
    #[inline]
    pub fn r(&self, i: usize, j: usize) -> T {
        if i == j {
            self.rdiag[i]
        } else {
            self.factors[(i, j)]
        }
    }

    /// Explicit thin Q (n x q) with orthonormal columns spanning the design.
    pub fn thin_q(&self) -> Matrix<T> {
        let (n, q) = (self.rows(), self.cols());
        let mut out = Matrix::zeros(n, q);
        for j in 0..q {
            let c = out.col_mut(j);
            c[j] = T::one();
            self.apply_q(c);
        }
        out
    }
}
