//! Dense symmetric positive-definite solves for the GP and ridge models.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Lower-triangular Cholesky factor stored row-major (`n × n`).
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factorizes the row-major symmetric matrix `a`. Returns `None` when a
    /// pivot is not strictly positive.
    pub fn factor(a: &[T], n: usize) -> Option<Self> {
        assert_eq!(a.len(), n * n);
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d = d - l[j * n + k] * l[j * n + k];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                for k in 0..j {
                    s = s - ri[k] * rj[k];
                }
                l[i * n + j] = s / d;
            }
        }
        Some(Self { n, l })
    }

    /// Factorizes `a + jitter·I`, walking the jitter ladder
    /// `min_jitter, 10·min_jitter, …, max_jitter` after a plain attempt.
    /// Returns the factor and the jitter actually added.
    pub fn factor_with_jitter(a: &[T], n: usize, min_jitter: T, max_jitter: T) -> Result<(Self, T)> {
        if let Some(c) = Self::factor(a, n) {
            return Ok((c, T::zero()));
        }
        let mut jitter = min_jitter;
        let mut work = a.to_vec();
        loop {
            for i in 0..n {
                work[i * n + i] = a[i * n + i] + jitter;
            }
            if let Some(c) = Self::factor(&work, n) {
                return Ok((c, jitter));
            }
            if jitter >= max_jitter {
                return Err(Error::NotPositiveDefinite {
                    jitter: jitter.to_f64_lossy(),
                });
            }
            jitter = (jitter * T::lit(10.0)).min(max_jitter);
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L z = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            let row = &self.l[i * n..i * n + i];
            for k in 0..i {
                s = s - row[k] * z[k];
            }
            z[i] = s / self.l[i * n + i];
        }
        z
    }

    /// Solves `Lᵀ x = z`.
    pub fn solve_upper(&self, z: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x = z.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s = s - self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `log det A = 2 Σ log L_ii`.
    pub fn log_det(&self) -> T {
        (0..self.n)
            .map(|i| self.l[i * self.n + i].ln())
            .sum::<T>()
            * T::lit(2.0)
    }

    /// Dense `A⁻¹`, row-major.
    pub fn inverse(&self) -> Vec<T> {
        let n = self.n;
        let mut inv = vec![T::zero(); n * n];
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        inv
    }
}
