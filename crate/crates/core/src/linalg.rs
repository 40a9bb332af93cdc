//! Dense row-major matrices.
//!
//! A `Matrix<T>` stores `rows * cols` scalars in row-major order. Feature
//! sequences are laid out one frame per column, parameter blocks as
//! `[out_dim x in_dim]`. Shape mismatches in the kernels are programmer
//! error and panic via `assert!`; user-facing validation lives in the
//! higher-level modules.

use crate::scalar::Scalar;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Config(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { T::one() } else { T::zero() })
    }

    /// Column vector from a slice.
    pub fn column(values: &[T]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
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
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut T {
        &mut self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: T) {
        self.data.fill(v);
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// `self * rhs`.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == T::zero() {
                    continue;
                }
                let lhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(lhs_row) {
                    *o = a.mul_add(b, *o);
                }
            }
        }
        out
    }

    /// `self^T * rhs`.
    pub fn matmul_tn(&self, rhs: &Self) -> Self {
        assert_eq!(
            self.rows, rhs.rows,
            "matmul_tn: ({}x{})^T * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Self::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            for i in 0..self.cols {
                let a = self.data[k * self.cols + i];
                if a == T::zero() {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o = a.mul_add(b, *o);
                }
            }
        }
        out
    }

    /// `self * rhs^T`.
    pub fn matmul_nt(&self, rhs: &Self) -> Self {
        assert_eq!(
            self.cols, rhs.cols,
            "matmul_nt: {}x{} * ({}x{})^T",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Self::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a_row = &self.data[i * self.cols..(i + 1) * self.cols];
            for j in 0..rhs.rows {
                let b_row = &rhs.data[j * rhs.cols..(j + 1) * rhs.cols];
                let mut acc = T::zero();
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc = a.mul_add(b, acc);
                }
                out.data[i * rhs.rows + j] = acc;
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert!(self.same_shape(other), "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &Self, s: T) {
        assert!(self.same_shape(other), "add_scaled shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = s.mul_add(b, *a);
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = *v * s;
        }
        out
    }

    pub fn scale_mut(&mut self, s: T) {
        for v in &mut self.data {
            *v = *v * s;
        }
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .fold(T::zero(), |acc, &v| acc + v)
            })
            .collect()
    }

    /// Dot product of column `j` of `self` with column `jo` of `other`.
    pub fn col_dot(&self, j: usize, other: &Self, jo: usize) -> T {
        assert_eq!(self.rows, other.rows, "col_dot row mismatch");
        let mut acc = T::zero();
        for r in 0..self.rows {
            acc = self.data[r * self.cols + j].mul_add(other.data[r * other.cols + jo], acc);
        }
        acc
    }

    /// `self[:, dst_col] += s * src[:, src_col]`.
    pub fn add_col_scaled(&mut self, dst_col: usize, src: &Self, src_col: usize, s: T) {
        assert_eq!(self.rows, src.rows, "add_col_scaled row mismatch");
        for r in 0..self.rows {
            let v = src.data[r * src.cols + src_col];
            let slot = &mut self.data[r * self.cols + dst_col];
            *slot = s.mul_add(v, *slot);
        }
    }

    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|r| self.data[r * self.cols + j]).collect()
    }

    pub fn set_col(&mut self, j: usize, values: &[T]) {
        assert_eq!(values.len(), self.rows, "set_col length mismatch");
        for (r, &v) in values.iter().enumerate() {
            self.data[r * self.cols + j] = v;
        }
    }

    /// Copy of columns `[lo, hi)`.
    pub fn cols_range(&self, lo: usize, hi: usize) -> Self {
        assert!(lo <= hi && hi <= self.cols, "cols_range out of bounds");
        Self::from_fn(self.rows, hi - lo, |r, c| self.at(r, lo + c))
    }

    /// Writes `src` into columns starting at `at`.
    pub fn paste_cols(&mut self, at: usize, src: &Self) {
        assert_eq!(self.rows, src.rows, "paste_cols row mismatch");
        assert!(at + src.cols <= self.cols, "paste_cols out of bounds");
        for r in 0..src.rows {
            for c in 0..src.cols {
                self.data[r * self.cols + at + c] = src.data[r * src.cols + c];
            }
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.at(c, r))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }
}

impl<T: Scalar> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T: Scalar> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}
