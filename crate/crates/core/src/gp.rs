//! Exact Gaussian-process regression with an RBF kernel and zero prior mean.

use std::time::Instant;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::intervals::PointPredictor;
use crate::linalg::Cholesky;
use crate::scalar::Real;

/// Largest training set accepted for exact inference (O(n³) factorization).
pub const MAX_EXACT_N: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GpHyper<T> {
    pub lengthscale: T,
    pub signal_variance: T,
    pub noise_variance: T,
}

impl<T: Real> GpHyper<T> {
    pub fn new(lengthscale: T, signal_variance: T, noise_variance: T) -> Result<Self> {
        let h = Self {
            lengthscale,
            signal_variance,
            noise_variance,
        };
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        let pos = |v: T| v > T::zero() && v.is_finite();
        if pos(self.lengthscale) && pos(self.signal_variance) && pos(self.noise_variance) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("GP hyperparameters must be positive: {self:?}")))
        }
    }

    fn to_log(self) -> [T; 3] {
        [self.lengthscale.ln(), self.signal_variance.ln(), self.noise_variance.ln()]
    }

    fn from_log(v: [T; 3]) -> Self {
        Self {
            lengthscale: v[0].exp(),
            signal_variance: v[1].exp(),
            noise_variance: v[2].exp(),
        }
    }
}

impl<T: Real> Default for GpHyper<T> {
    fn default() -> Self {
        Self {
            lengthscale: T::one(),
            signal_variance: T::one(),
            noise_variance: T::lit(0.1),
        }
    }
}

fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&p, &q)| (p - q) * (p - q)).sum()
}

/// `s²·exp(−‖x1 − x2‖² / (2ℓ²))`.
pub fn rbf<T: Real>(x1: &[T], x2: &[T], hyper: &GpHyper<T>) -> T {
    debug_assert_eq!(x1.len(), x2.len());
    hyper.signal_variance * (-sq_dist(x1, x2) / (T::lit(2.0) * hyper.lengthscale * hyper.lengthscale)).exp()
}

/// Fitted GP: training data plus the Cholesky factor of `K + σ_n² I`.
#[derive(Clone, Debug)]
pub struct GpModel<T> {
    hyper: GpHyper<T>,
    features: Vec<T>,
    targets: Vec<T>,
    d: usize,
    chol: Cholesky<T>,
    weights: Vec<T>,
    jitter: T,
}

impl<T: Real> GpModel<T> {
    /// Conditions on `ds` with fixed hyperparameters. On factorization
    /// failure a jitter ladder from `1e-10·s²` to `1e-4·s²` is tried.
    pub fn new(ds: &Dataset<T>, hyper: GpHyper<T>) -> Result<Self> {
        hyper.validate()?;
        let n = ds.n();
        if n > MAX_EXACT_N {
            return Err(Error::TooLarge { n, max: MAX_EXACT_N });
        }
        let k = Self::covariance(ds, &hyper);
        let s2 = hyper.signal_variance;
        let (chol, jitter) = Cholesky::factor_with_jitter(&k, n, T::lit(1e-10) * s2, T::lit(1e-4) * s2)?;
        let weights = chol.solve(ds.targets());
        Ok(Self {
            hyper,
            features: ds.features().to_vec(),
            targets: ds.targets().to_vec(),
            d: ds.d(),
            chol,
            weights,
            jitter,
        })
    }

    fn covariance(ds: &Dataset<T>, hyper: &GpHyper<T>) -> Vec<T> {
        let n = ds.n();
        let mut k = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = rbf(ds.row(i), ds.row(j), hyper);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
            k[i * n + i] = k[i * n + i] + hyper.noise_variance;
        }
        k
    }

    pub fn hyper(&self) -> GpHyper<T> {
        self.hyper
    }

    pub fn jitter(&self) -> T {
        self.jitter
    }

    pub fn n_train(&self) -> usize {
        self.targets.len()
    }

    fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    /// Predictive mean and variance (observation noise included) at `x`.
    pub fn posterior(&self, x: &[T]) -> Result<(T, T)> {
        if x.len() != self.d {
            return Err(Error::Dimension {
                expected: self.d,
                got: x.len(),
            });
        }
        let kstar: Vec<T> = (0..self.n_train()).map(|i| rbf(self.row(i), x, &self.hyper)).collect();
        let mean = kstar.iter().zip(&self.weights).map(|(&a, &b)| a * b).sum();
        let v = self.chol.solve_lower(&kstar);
        let explained: T = v.iter().map(|&a| a * a).sum();
        let noise = self.hyper.noise_variance;
        let var = (self.hyper.signal_variance + noise - explained).max(noise);
        Ok((mean, var))
    }

    /// `−½ yᵀ(K + σ_n²I)⁻¹y − ½ log det(K + σ_n²I) − (n/2) log 2π`.
    pub fn log_marginal_likelihood(&self) -> T {
        let n = T::from_count(self.n_train());
        let fit: T = self.targets.iter().zip(&self.weights).map(|(&a, &b)| a * b).sum();
        -T::lit(0.5) * fit - T::lit(0.5) * self.chol.log_det() - T::lit(0.5) * n * T::lit(std::f64::consts::TAU).ln()
    }

    /// Gradient of the log marginal likelihood with respect to
    /// `(log ℓ, log s², log σ_n²)`.
    pub fn lml_gradient(&self) -> [T; 3] {
        let n = self.n_train();
        let inv = self.chol.inverse();
        let a = &self.weights;
        let h = self.hyper;
        let ell2 = h.lengthscale * h.lengthscale;
        let (mut g_ell, mut g_sig, mut g_noise) = (T::zero(), T::zero(), T::zero());
        for i in 0..n {
            for j in 0..n {
                let m = a[i] * a[j] - inv[i * n + j];
                let r2 = sq_dist(self.row(i), self.row(j));
                let kij = h.signal_variance * (-r2 / (T::lit(2.0) * ell2)).exp();
                g_sig = g_sig + m * kij;
                g_ell = g_ell + m * kij * r2 / ell2;
                if i == j {
                    g_noise = g_noise + m * h.noise_variance;
                }
            }
        }
        let half = T::lit(0.5);
        [half * g_ell, half * g_sig, half * g_noise]
    }
}

impl<T: Real> PointPredictor<T> for GpModel<T> {
    fn predict(&self, x: &[T]) -> T {
        self.posterior(x).expect("feature dimension matches the fitted GP").0
    }
}

/// Fits hyperparameters by `iters` steps of gradient ascent on the log
/// marginal likelihood in log-space. Each step backtracks until the
/// likelihood does not decrease, so the returned model is never worse than
/// `init`.
pub fn fit_gp<T: Real>(ds: &Dataset<T>, init: GpHyper<T>, iters: usize) -> Result<GpModel<T>> {
    fit_gp_until(ds, init, iters, None)
}

pub fn fit_gp_until<T: Real>(ds: &Dataset<T>, init: GpHyper<T>, iters: usize, deadline: Option<Instant>) -> Result<GpModel<T>> {
    if ds.n() < 2 {
        return Err(Error::InvalidArgument("GP fitting needs at least two rows".into()));
    }
    let mut model = GpModel::new(ds, init)?;
    let mut lml = model.log_marginal_likelihood();
    let mut step = T::lit(0.5);
    for _ in 0..iters {
        if deadline.is_some_and(|d| Instant::now() > d) {
            return Err(Error::Timeout);
        }
        let g = model.lml_gradient();
        let norm = g.iter().map(|&v| v * v).sum::<T>().sqrt();
        if !(norm > T::lit(1e-10)) {
            break;
        }
        let dir = g.map(|v| v / norm.max(T::one()));
        let base = model.hyper.to_log();
        let mut accepted = false;
        for _ in 0..30 {
            let cand = GpHyper::from_log([0, 1, 2].map(|k| base[k] + step * dir[k]));
            if let Ok(m) = GpModel::new(ds, cand) {
                let l = m.log_marginal_likelihood();
                if l.is_finite() && l >= lml {
                    model = m;
                    lml = l;
                    accepted = true;
                    break;
                }
            }
            step = step * T::lit(0.5);
        }
        if !accepted {
            break;
        }
        step = (step * T::lit(1.5)).min(T::lit(2.0));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset<f64> {
        Dataset::new(vec![-1.0, 0.2, 1.5], vec![0.3, -0.4, 1.1], 1).unwrap()
    }

    #[test]
    fn rbf_basics() {
        let h = GpHyper::new(0.7, 2.0, 0.1).unwrap();
        assert_eq!(rbf(&[0.3, 1.0], &[0.3, 1.0], &h), 2.0);
        assert_eq!(rbf(&[0.0, 1.0], &[2.0, -1.0], &h), rbf(&[2.0, -1.0], &[0.0, 1.0], &h));
        let flat = GpHyper::new(1e6f64, 2.0, 0.1).unwrap();
        assert!((rbf(&[0.0], &[5.0], &flat) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn zero_iterations_keep_init() {
        let h = GpHyper::new(0.8, 1.2, 0.05).unwrap();
        assert_eq!(fit_gp(&toy(), h, 0).unwrap().hyper(), h);
    }

    #[test]
    fn fitting_never_lowers_likelihood() {
        let h = GpHyper::new(3.0, 0.2, 0.5).unwrap();
        let before = GpModel::new(&toy(), h).unwrap().log_marginal_likelihood();
        let after = fit_gp(&toy(), h, 20).unwrap().log_marginal_likelihood();
        assert!(after >= before);
    }

    #[test]
    fn interpolates_with_tiny_noise() {
        let h = GpHyper::new(0.5, 1.0, 1e-10).unwrap();
        let m = GpModel::new(&toy(), h).unwrap();
        let (mean, _) = m.posterior(&[0.2]).unwrap();
        assert!((mean + 0.4).abs() < 1e-6);
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let h = GpHyper::new(0.5, 1.3, 0.2).unwrap();
        let m = GpModel::new(&toy(), h).unwrap();
        let (mean, var) = m.posterior(&[100.0]).unwrap();
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.5).abs() < 1e-6);
    }

    #[test]
    fn scalar_likelihood_by_hand() {
        let ds = Dataset::new(vec![0.0], vec![0.0], 1).unwrap();
        let m = GpModel::new(&ds, GpHyper::new(1.0, 0.75, 0.25).unwrap()).unwrap();
        assert!((m.log_marginal_likelihood() + 0.5 * std::f64::consts::TAU.ln()).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let ds = Dataset::new(vec![-1.0, 0.1, 0.4, 2.0], vec![0.5, -0.2, 0.1, 0.9], 1).unwrap();
        let h = GpHyper::new(0.9, 1.1, 0.3).unwrap();
        let g = GpModel::new(&ds, h).unwrap().lml_gradient();
        let base = h.to_log();
        for k in 0..3 {
            let eval = |delta: f64| {
                let mut v = base;
                v[k] += delta;
                GpModel::new(&ds, GpHyper::from_log(v)).unwrap().log_marginal_likelihood()
            };
            let fd = (eval(1e-5) - eval(-1e-5)) / 2e-5;
            assert!((fd - g[k]).abs() <= 1e-6 * (1.0 + fd.abs()), "k={k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn rejects_bad_hyper_and_tiny_data() {
        assert!(GpHyper::new(0.0, 1.0, 1.0).is_err());
        let one = Dataset::new(vec![0.0], vec![1.0], 1).unwrap();
        assert!(fit_gp(&one, GpHyper::default(), 5).is_err());
    }
}
