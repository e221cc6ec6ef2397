//! Ridge regression with an unpenalized intercept.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::intervals::PointPredictor;
use crate::linalg::Cholesky;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Ridge<T> {
    pub coefficients: Vec<T>,
    pub intercept: T,
}

impl<T: Real> Ridge<T> {
    /// Solves `(XᶜᵀXᶜ + λI) β = Xᶜᵀyᶜ` on centered data.
    pub fn fit(ds: &Dataset<T>, lambda: T) -> Result<Self> {
        if lambda < T::zero() {
            return Err(Error::InvalidArgument("ridge penalty must be non-negative".into()));
        }
        let (n, d) = (ds.n(), ds.d());
        let x_mean: Vec<T> = (0..d)
            .map(|j| ds.column(j).sum::<T>() / T::from_count(n))
            .collect();
        let y_mean = crate::scalar::mean(ds.targets());
        let mut gram = vec![T::zero(); d * d];
        let mut rhs = vec![T::zero(); d];
        for (i, row) in ds.rows().enumerate() {
            let yc = ds.target(i) - y_mean;
            for a in 0..d {
                let xa = row[a] - x_mean[a];
                rhs[a] = rhs[a] + xa * yc;
                for b in 0..=a {
                    gram[a * d + b] = gram[a * d + b] + xa * (row[b] - x_mean[b]);
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                gram[b * d + a] = gram[a * d + b];
            }
            gram[a * d + a] = gram[a * d + a] + lambda;
        }
        let scale = (0..d).map(|a| gram[a * d + a]).fold(T::one(), T::max);
        let (chol, _) = Cholesky::factor_with_jitter(&gram, d, T::lit(1e-12) * scale, T::lit(1e-6) * scale)?;
        let coefficients = chol.solve(&rhs);
        let intercept = y_mean
            - coefficients
                .iter()
                .zip(&x_mean)
                .map(|(&b, &m)| b * m)
                .sum::<T>();
        Ok(Self {
            coefficients,
            intercept,
        })
    }

    pub fn predict_row(&self, x: &[T]) -> T {
        self.intercept + x.iter().zip(&self.coefficients).map(|(&a, &b)| a * b).sum::<T>()
    }
}

impl<T: Real> PointPredictor<T> for Ridge<T> {
    fn predict(&self, x: &[T]) -> T {
        self.predict_row(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 2.0 * x).collect();
        let ds = Dataset::new(xs, ys, 1).unwrap();
        let m = Ridge::fit(&ds, 0.0).unwrap();
        assert!((m.coefficients[0] + 2.0).abs() < 1e-10);
        assert!((m.intercept - 3.0).abs() < 1e-10);
    }

    #[test]
    fn penalty_shrinks_slope() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let ds = Dataset::new(xs, ys, 1).unwrap();
        let free = Ridge::fit(&ds, 0.0).unwrap();
        let shrunk = Ridge::fit(&ds, 100.0).unwrap();
        assert!(shrunk.coefficients[0].abs() < free.coefficients[0].abs());
        assert!(Ridge::fit(&ds, -1.0).is_err());
    }
}
