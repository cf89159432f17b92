//! Small dense symmetric solves.

use crate::scalar::Real;

/// Row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.n + c]
    }

    pub fn add(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.n + c] += v;
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix. Fails
/// when a pivot falls below `rel_tol` times the largest diagonal entry.
pub fn cholesky<T: Real>(a: &Matrix<T>, rel_tol: T) -> Option<Matrix<T>> {
    let n = a.n;
    let scale = a.diagonal().into_iter().fold(T::zero(), T::max);
    if !(scale > T::zero()) {
        return if n == 0 { Some(Matrix::zeros(0)) } else { None };
    }
    let tol = scale * rel_tol;
    let mut l = Matrix::zeros(n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > tol) {
            return None;
        }
        let djj = d.sqrt();
        l.data[j * n + j] = djj;
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.data[i * n + j] = s / djj;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b`.
pub fn cholesky_solve<T: Real>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.n;
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] = y[i] - l.get(i, k) * y[k];
        }
        y[i] /= l.get(i, i);
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] = y[i] - l.get(k, i) * y[k];
        }
        y[i] /= l.get(i, i);
    }
    y
}
