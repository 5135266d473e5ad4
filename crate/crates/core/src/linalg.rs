//! Small dense vectors and matrices. Dimensions here are tiny (the state
//! dimension of the SDE), so everything is plain row-major storage.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub fn norm<S: Scalar>(a: &[S]) -> S {
    dot(a, a).sqrt()
}

pub fn sub<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn add<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub fn scale<S: Scalar>(a: &[S], k: S) -> Vec<S> {
    a.iter().map(|&x| x * k).collect()
}

pub fn distance<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += (x - y) * (x - y);
    }
    acc.sqrt()
}

pub fn is_finite<S: Scalar>(a: &[S]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_diagonal(diag: &[S]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds from nested rows; `None` if the rows are ragged or empty.
    pub fn from_rows(rows: &[Vec<S>]) -> Option<Self> {
        let cols = rows.first()?.len();
        if cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        Some(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// `u vᵀ`
    pub fn outer(u: &[S], v: &[S]) -> Self {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<S> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<S>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| v.is_zero())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul_vec(&self, v: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.rows];
        self.mul_vec_into(v, &mut out);
        out
    }

    #[inline]
    pub fn mul_vec_into(&self, v: &[S], out: &mut [S]) {
        debug_assert_eq!(v.len(), self.cols);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), v);
        }
    }

    /// `selfᵀ v`
    pub fn tr_mul_vec(&self, v: &[S]) -> Vec<S> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![S::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn mul_mat(&self, other: &Self) -> Self {
        debug_assert_eq!(self.cols, other.rows);
        Self::from_fn(self.rows, other.cols, |i, j| {
            let mut acc = S::zero();
            for k in 0..self.cols {
                acc += self[(i, k)] * other[(k, j)];
            }
            acc
        })
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn scaled(&self, k: S) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&a| a * k).collect() }
    }

    pub fn add_scaled_assign(&mut self, other: &Self, k: S) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
    }

    pub fn trace(&self) -> S {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> S {
        norm(&self.data)
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |m, v| m.max(v.abs()))
    }

    /// Spectral norm via power iteration on `AᵀA`.
    pub fn operator_norm(&self) -> S {
        if self.is_zero() {
            return S::zero();
        }
        let ata = self.transpose().mul_mat(self);
        let mut v = vec![S::one(); self.cols];
        // Deterministic non-symmetric start so we don't sit on an eigenvector's null complement.
        for (i, x) in v.iter_mut().enumerate() {
            *x += S::lit(0.1 * i as f64);
        }
        let mut lambda = S::zero();
        for _ in 0..500 {
            let w = ata.mul_vec(&v);
            let n = norm(&w);
            if n.is_zero() {
                break;
            }
            let next = n / norm(&v);
            v = scale(&w, S::one() / n);
            if (next - lambda).abs() <= S::tolerance(1e-15) * next {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda.sqrt()
    }

    /// Solves `self · x = rhs` by Gaussian elimination with partial pivoting.
    /// Returns `None` for a (numerically) singular matrix.
    pub fn solve(&self, rhs: &[S]) -> Option<Vec<S>> {
        let n = self.rows;
        if !self.is_square() || rhs.len() != n {
            return None;
        }
        let mut a = self.data.clone();
        let mut b = rhs.to_vec();
        let scale_ref = self.max_abs().max(S::min_positive_value());
        for col in 0..n {
            let pivot = (col..n).max_by(|&i, &j| a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap())?;
            if a[pivot * n + col].abs() <= S::epsilon() * scale_ref {
                return None;
            }
            if pivot != col {
                for k in 0..n {
                    a.swap(col * n + k, pivot * n + k);
                }
                b.swap(col, pivot);
            }
            let p = a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] / p;
                if f.is_zero() {
                    continue;
                }
                for k in col..n {
                    let v = a[col * n + k];
                    a[r * n + k] -= f * v;
                }
                let bc = b[col];
                b[r] -= f * bc;
            }
        }
        let mut x = vec![S::zero(); n];
        for i in (0..n).rev() {
            let mut acc = b[i];
            for k in i + 1..n {
                acc -= a[i * n + k] * x[k];
            }
            x[i] = acc / a[i * n + i];
        }
        Some(x)
    }

    pub fn inverse(&self) -> Option<Self> {
        let n = self.rows;
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let mut e = vec![S::zero(); n];
            e[j] = S::one();
            cols.push(self.solve(&e)?);
        }
        Some(Self::from_fn(n, n, |i, j| cols[j][i]))
    }

    /// Determinant by LU with partial pivoting.
    pub fn determinant(&self) -> S {
        assert!(self.is_square(), "determinant of non-square matrix");
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = S::one();
        for col in 0..n {
            let pivot =
                (col..n).max_by(|&i, &j| a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap()).unwrap();
            if a[pivot * n + col].is_zero() {
                return S::zero();
            }
            if pivot != col {
                for k in 0..n {
                    a.swap(col * n + k, pivot * n + k);
                }
                det = -det;
            }
            let p = a[col * n + col];
            det *= p;
            for r in col + 1..n {
                let f = a[r * n + col] / p;
                for k in col..n {
                    let v = a[col * n + k];
                    a[r * n + k] -= f * v;
                }
            }
        }
        det
    }
}

impl<S> Index<(usize, usize)> for Matrix<S> {
    type Output = S;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> IndexMut<(usize, usize)> for Matrix<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_and_inverse() {
        let a = Matrix::<f64>::from_rows(&[vec![4.0, 1.0], vec![2.0, 3.0]]).unwrap();
        let x = a.solve(&[1.0, 2.0]).unwrap();
        assert!((x[0] - 0.1).abs() < 1e-15 && (x[1] - 0.6).abs() < 1e-15);
        let inv = a.inverse().unwrap();
        let id = a.mul_mat(&inv);
        assert!(id.sub(&Matrix::identity(2)).max_abs() < 1e-15);
        assert!((a.determinant() - 10.0).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_has_no_solution() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(a.solve(&[1.0, 1.0]).is_none());
        assert_eq!(a.determinant(), 0.0);
    }

    #[test]
    fn operator_norm_of_diagonal() {
        let a = Matrix::<f64>::from_diagonal(&[2.0, -3.0, 1.0]);
        assert!((a.operator_norm() - 3.0).abs() < 1e-10);
        let r = Matrix::<f64>::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!((r.operator_norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Matrix::<f64>::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_none());
    }
}
