//! Small dense matrices and LU factorisation with partial pivoting.
//!
//! Sized for stage systems of dimension `s * d` (a few dozen at most) and
//! the tiny normal-equation systems of the smoothing filter, plus a
//! Householder least-squares solver for fitting network output layers.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Matrix<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
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
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
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
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<T> {
        self.data
    }
    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Matrix<U> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().copied().map(f).collect() }
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        self.iter_rows().map(|r| r.iter().zip(x).map(|(&a, &b)| a * b).sum()).collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }
}

/// LU factors `P A = L U` of a square matrix.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    /// Factorises `a`; fails with [`Error::SingularJacobian`] on a zero pivot.
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        assert_eq!(a.rows(), a.cols(), "LU of a non-square matrix");
        let n = a.rows();
        let mut lu = a.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(T::min_positive_value());
        let tiny = scale * T::epsilon() * T::lit(n as f64);
        for k in 0..n {
            let (piv, best) = (k..n)
                .map(|i| (i, lu[i * n + k].abs()))
                .fold((k, -T::one()), |acc, x| if x.1 > acc.1 { x } else { acc });
            if !(best > tiny) {
                return Err(Error::SingularJacobian);
            }
            if piv != k {
                for j in 0..n {
                    lu.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let factor = lu[i * n + k] / pivot;
                lu[i * n + k] = factor;
                if factor != T::zero() {
                    for j in k + 1..n {
                        let u = lu[k * n + j];
                        lu[i * n + j] -= factor * u;
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc / self.lu[i * n + i];
        }
        x
    }

    /// Solves `A^T x = b`.
    pub fn solve_transpose(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        assert_eq!(b.len(), n);
        // U^T z = b
        let mut z = b.to_vec();
        for i in 0..n {
            let mut acc = z[i];
            for j in 0..i {
                acc -= self.lu[j * n + i] * z[j];
            }
            z[i] = acc / self.lu[i * n + i];
        }
        // L^T y = z
        for i in (0..n).rev() {
            let mut acc = z[i];
            for j in i + 1..n {
                acc -= self.lu[j * n + i] * z[j];
            }
            z[i] = acc;
        }
        let mut x = vec![T::zero(); n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = z[k];
        }
        x
    }

    pub fn inverse(&self) -> Matrix<T> {
        let n = self.n;
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv.set(i, j, col[i]);
            }
        }
        inv
    }
}

/// Minimises `|A W - B|^2 + ridge |W|^2` by Householder QR.
///
/// The ridge term enters as `sqrt(ridge) I` rows appended to `A`, so the
/// normal equations are never formed.
pub fn least_squares(a: &Matrix<f64>, b: &Matrix<f64>, ridge: f64) -> Result<Matrix<f64>> {
    assert_eq!(a.rows(), b.rows(), "least-squares row mismatch");
    let (n0, q) = (a.rows(), a.cols());
    let extra = if ridge > 0.0 { q } else { 0 };
    let n = n0 + extra;
    if n < q {
        return Err(Error::SingularJacobian);
    }
    let r_ridge = ridge.max(0.0).sqrt();
    let mut m = Matrix::from_fn(n, q, |i, j| if i < n0 { a.get(i, j) } else if i - n0 == j { r_ridge } else { 0.0 });
    let mut rhs = Matrix::from_fn(n, b.cols(), |i, j| if i < n0 { b.get(i, j) } else { 0.0 });
    let scale = m.as_slice().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut v = vec![0.0; n];
    for k in 0..q {
        let norm = (k..n).map(|i| m.get(i, k).powi(2)).sum::<f64>().sqrt();
        if norm <= scale * 1e-14 * n as f64 {
            return Err(Error::SingularJacobian);
        }
        let alpha = if m.get(k, k) > 0.0 { -norm } else { norm };
        for i in k..n {
            v[i] = m.get(i, k);
        }
        v[k] -= alpha;
        let vnorm2: f64 = (k..n).map(|i| v[i] * v[i]).sum();
        let apply = |mat: &mut Matrix<f64>, from: usize| {
            for j in from..mat.cols() {
                let dot: f64 = (k..n).map(|i| v[i] * mat.get(i, j)).sum();
                let f = 2.0 * dot / vnorm2;
                for i in k..n {
                    let val = mat.get(i, j) - f * v[i];
                    mat.set(i, j, val);
                }
            }
        };
        apply(&mut m, k);
        apply(&mut rhs, 0);
    }
    let mut w = Matrix::zeros(q, b.cols());
    for c in 0..b.cols() {
        for k in (0..q).rev() {
            let acc: f64 = (k + 1..q).map(|j| m.get(k, j) * w.get(j, c)).sum();
            w.set(k, c, (rhs.get(k, c) - acc) / m.get(k, k));
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Matrix<f64> {
        Matrix::from_rows(&[vec![0.0, 2.0, 1.0], vec![1.0, -1.0, 3.0], vec![4.0, 1.0, 0.5]])
    }

    #[test]
    fn solve_recovers_known_solution() {
        let a = sample();
        let x = [1.0, -2.0, 0.5];
        let b = a.matvec(&x);
        let lu = Lu::factor(&a).unwrap();
        for (got, want) in lu.solve(&b).iter().zip(x) {
            assert!((got - want).abs() < 1e-14);
        }
        let bt = a.transpose().matvec(&x);
        for (got, want) in lu.solve_transpose(&bt).iter().zip(x) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = sample();
        let inv = Lu::factor(&a).unwrap().inverse();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| inv.get(i, k) * a.get(k, j)).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert_eq!(Lu::factor(&a).unwrap_err(), Error::SingularJacobian);
    }

    #[test]
    fn least_squares_recovers_exact_and_ridge_solutions() {
        let a = Matrix::from_fn(7, 3, |i, j| ((i * i * (j + 1) + j) as f64 * 0.913).sin());
        let w = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 0.0], vec![3.0, 1.0]]);
        let b = Matrix::from_fn(7, 2, |i, c| (0..3).map(|j| a.get(i, j) * w.get(j, c)).sum());
        let got = least_squares(&a, &b, 0.0).unwrap();
        assert!(got.as_slice().iter().zip(w.as_slice()).all(|(x, y)| (x - y).abs() < 1e-12));
        // Ridge solution satisfies (A^T A + r I) W = A^T B.
        let r = 0.3;
        let wr = least_squares(&a, &b, r).unwrap();
        for j in 0..3 {
            for c in 0..2 {
                let lhs: f64 = (0..3).map(|k| (0..7).map(|i| a.get(i, j) * a.get(i, k)).sum::<f64>() * wr.get(k, c)).sum::<f64>() + r * wr.get(j, c);
                let rhs: f64 = (0..7).map(|i| a.get(i, j) * b.get(i, c)).sum();
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
        let rank_deficient = Matrix::from_fn(4, 2, |i, _| i as f64);
        assert!(least_squares(&rank_deficient, &Matrix::zeros(4, 1), 0.0).is_err());
    }
}
