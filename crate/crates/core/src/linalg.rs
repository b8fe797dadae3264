//! Small dense matrices and a partial-pivoted LU factorization.
//!
//! Everything here is sized for KKT systems of a few hundred rows at most;
//! storage is row-major and nothing is blocked or vectorized by hand.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows; every row must have `cols` entries.
    pub fn from_rows(rows: &[Vec<T>], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
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
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `self * v`
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ * v`
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + a * vi;
            }
        }
        out
    }

    pub fn mul_mat(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let orow = other.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(orow) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }

    /// `self * v` with every row product accumulated by [`CompensatedSum`].
    pub fn mul_vec_accurate(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| dot_accurate(self.row(i), v))
            .collect()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &a| m.max(a.abs()))
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let scale = self.max_abs().max(T::one());
        (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol * scale))
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|&a| U::of(a.to_f64_lossless()))
                .collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

/// Dot product accumulated by [`CompensatedSum`], as a `hi + lo` pair.
#[inline]
pub fn dot_parts<T: Real>(a: &[T], b: &[T]) -> (T, T) {
    let mut acc = CompensatedSum::new();
    for (&x, &y) in a.iter().zip(b) {
        if x != T::zero() && y != T::zero() {
            acc.add_product(x, y);
        }
    }
    acc.parts()
}

/// Dot product accumulated by [`CompensatedSum`].
#[inline]
pub fn dot_accurate<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = CompensatedSum::new();
    for (&x, &y) in a.iter().zip(b) {
        if x != T::zero() && y != T::zero() {
            acc.add_product(x, y);
        }
    }
    acc.value()
}

pub fn norm_inf<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &a| m.max(a.abs()))
}

/// `a·b` as `p + e` with `p = fl(a·b)`, exactly.
#[inline(always)]
pub fn two_product<T: Real>(a: T, b: T) -> (T, T) {
    let p = a * b;
    if cfg!(target_feature = "fma") {
        return (p, a.mul_add(b, -p));
    }
    let split = |v: T| {
        let c = T::of(T::SPLITTER) * v;
        let hi = c - (c - v);
        (hi, v - hi)
    };
    let ((ah, al), (bh, bl)) = (split(a), split(b));
    (p, ((ah * bh - p) + ah * bl + al * bh) + al * bl)
}

/// Compensated accumulator (error-free transformations for sums and products).
///
/// The result is as accurate as if the sum were formed in twice the working
/// precision and rounded once.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum<T> {
    sum: T,
    err: T,
}

impl<T: Real> CompensatedSum<T> {
    pub fn new() -> Self {
        CompensatedSum {
            sum: T::zero(),
            err: T::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: T) {
        let s = self.sum + x;
        let bp = s - self.sum;
        let e = (self.sum - (s - bp)) + (x - bp);
        self.sum = s;
        self.err = self.err + e;
    }

    #[inline]
    pub fn add_product(&mut self, a: T, b: T) {
        let (p, e) = two_product(a, b);
        self.add(p);
        self.err = self.err + e;
    }

    pub fn value(&self) -> T {
        self.sum + self.err
    }

    /// The accumulated value as an unevaluated pair `hi + lo`.
    pub fn parts(&self) -> (T, T) {
        let hi = self.sum + self.err;
        let lo = self.err - (hi - self.sum);
        (hi, lo)
    }
}

/// Relative pivot threshold below which a matrix is declared singular.
pub fn singular_threshold<T: Real>() -> T {
    T::of(1e-12).max(T::epsilon() * T::of(16.0))
}

/// Partial-pivoted LU factors `P A = L U`, stored packed.
#[derive(Clone, Debug)]
pub struct LuFactors<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Real> LuFactors<T> {
    pub fn factorize(a: &Matrix<T>) -> Result<Self> {
        assert_eq!(a.rows(), a.cols(), "LU needs a square matrix");
        let n = a.rows();
        let threshold = singular_threshold::<T>() * a.max_abs();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) =
                (k..n)
                    .map(|i| (i, lu[(i, k)].abs()))
                    .fold(
                        (k, T::zero()),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if !(pivot > threshold) || pivot == T::zero() {
                return Err(Error::SingularJacobian {
                    column: k,
                    pivot: pivot.to_f64_lossless(),
                    threshold: threshold.to_f64_lossless(),
                });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(p, j)];
                    lu[(p, j)] = lu[(k, j)];
                    lu[(k, j)] = tmp;
                }
            }
            let d = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / d;
                lu[(i, k)] = f;
                if f == T::zero() {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] = lu[(i, j)] - f * u;
                }
            }
        }
        Ok(LuFactors { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s = s - self.lu[(i, j)] * y[j];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s = s - self.lu[(i, j)] * y[j];
            }
            y[i] = s / self.lu[(i, i)];
        }
        y
    }

    /// Explicit inverse, one column solve at a time.
    pub fn inverse(&self) -> Matrix<T> {
        self.inverse_impl(None)
    }

    /// Explicit inverse with each column improved by one step of iterative
    /// refinement against `a` (the matrix that was factorized), using a
    /// compensated residual.
    pub fn refined_inverse(&self, a: &Matrix<T>) -> Matrix<T> {
        self.inverse_impl(Some(a))
    }

    fn inverse_impl(&self, a: Option<&Matrix<T>>) -> Matrix<T> {
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e[j] = T::one();
            let mut col = self.solve(&e);
            if let Some(a) = a {
                let r: Vec<T> = (0..n)
                    .map(|i| {
                        let mut acc = CompensatedSum::new();
                        acc.add(e[i]);
                        for (&aik, &ck) in a.row(i).iter().zip(&col) {
                            if aik != T::zero() {
                                acc.add_product(-aik, ck);
                            }
                        }
                        acc.value()
                    })
                    .collect();
                for (c, d) in col.iter_mut().zip(self.solve(&r)) {
                    *c = *c + d;
                }
            }
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
            e[j] = T::zero();
        }
        inv
    }
}

/// Numerical row rank by Gaussian elimination with complete pivoting.
pub fn row_rank(m: &Matrix<f64>, rel_tol: f64) -> usize {
    let mut a = m.clone();
    let (rows, cols) = (a.rows(), a.cols());
    let threshold = rel_tol * a.max_abs();
    let mut rank = 0;
    for k in 0..rows.min(cols) {
        let mut best = (k, k, 0.0);
        for i in k..rows {
            for j in k..cols {
                let v = a[(i, j)].abs();
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        if best.2 <= threshold || best.2 == 0.0 {
            break;
        }
        let (p, q, _) = best;
        for j in 0..cols {
            let t = a[(p, j)];
            a[(p, j)] = a[(k, j)];
            a[(k, j)] = t;
        }
        for i in 0..rows {
            let t = a[(i, q)];
            a[(i, q)] = a[(i, k)];
            a[(i, k)] = t;
        }
        let d = a[(k, k)];
        for i in k + 1..rows {
            let f = a[(i, k)] / d;
            if f == 0.0 {
                continue;
            }
            for j in k..cols {
                let u = a[(k, j)];
                a[(i, j)] -= f * u;
            }
        }
        rank += 1;
    }
    rank
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(m: &Matrix<f64>) -> Vec<f64> {
    let n = m.rows();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off <= 1e-30 * a.max_abs().powi(2).max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}
