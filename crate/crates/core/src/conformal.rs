//! Inductive conformal prediction: the empirical quantile, calibration and
//! the four wrappers (point, normalized, interval and out-of-bag scores).
//!
//! Calibration sorts the scores `s₁ ≤ … ≤ sₙ` and takes the critical value
//! `α* = q̂((1 − α)(1 + 1/n))`, where `q̂(β)` is the `⌈βn⌉`-th smallest score
//! (`+∞` when `⌈βn⌉ > n`). Products like `βn` that land within a few ulps of
//! an integer are snapped to it before the ceiling.

use std::collections::HashSet;
use std::sync::Arc;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::intervals::{z_score, Interval, IntervalEstimator, PointPredictor};
use crate::scalar::Real;

fn rank<T: Real>(level: T, n: usize) -> i64 {
    let raw = level * T::from_count(n);
    let near = raw.round();
    let tol = T::lit(64.0) * T::epsilon() * raw.abs().max(T::one());
    let k = if (raw - near).abs() <= tol { near } else { raw.ceil() };
    k.to_i64().unwrap_or(if k > T::zero() { i64::MAX } else { i64::MIN })
}

fn sorted_scores<T: Real>(scores: &[T]) -> Result<Vec<T>> {
    if scores.is_empty() {
        return Err(Error::Empty("score set"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidData("NaN nonconformity score".into()));
    }
    let mut s = scores.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    Ok(s)
}

fn quantile_sorted<T: Real>(sorted: &[T], level: T) -> T {
    let k = rank(level, sorted.len());
    if k <= 0 {
        sorted[0]
    } else if k as usize > sorted.len() {
        T::infinity()
    } else {
        sorted[k as usize - 1]
    }
}

/// `⌈level·n⌉`-th smallest element; the minimum for a non-positive rank and
/// `+∞` past the end.
pub fn empirical_quantile<T: Real>(scores: &[T], level: T) -> Result<T> {
    if level.is_nan() {
        return Err(Error::InvalidArgument("NaN quantile level".into()));
    }
    Ok(quantile_sorted(&sorted_scores(scores)?, level))
}

/// Sorted calibration scores and the resulting critical value.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationRecord<T> {
    pub scores: Vec<T>,
    pub critical: T,
    pub alpha: T,
    pub n_cal: usize,
}

impl<T: Real> CalibrationRecord<T> {
    pub fn from_scores(scores: &[T], alpha: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(Error::InvalidArgument(format!("significance level {alpha} outside (0, 1)")));
        }
        let scores = sorted_scores(scores)?;
        let n = scores.len();
        let level = (T::one() - alpha) * (T::one() + T::one() / T::from_count(n));
        Ok(Self {
            critical: quantile_sorted(&scores, level),
            scores,
            alpha,
            n_cal: n,
        })
    }

    /// `false` when the calibration set is too small for level `α`.
    pub fn is_finite(&self) -> bool {
        self.critical.is_finite()
    }
}

/// Score `A(x, y)` of a labelled example; larger means stranger.
pub trait NonconformityMeasure<T> {
    fn score(&self, x: &[T], y: T) -> T;
}

/// Scores every calibration example and derives the critical value.
pub fn calibrate<T: Real, M: NonconformityMeasure<T> + ?Sized>(
    measure: &M,
    cal: &Dataset<T>,
    alpha: T,
) -> Result<CalibrationRecord<T>> {
    let scores: Vec<T> = cal.rows().zip(cal.targets()).map(|(x, &y)| measure.score(x, y)).collect();
    CalibrationRecord::from_scores(&scores, alpha)
}

/// Errors when the two index sets share an element.
pub fn check_disjoint(a: &[usize], b: &[usize]) -> Result<()> {
    let seen: HashSet<usize> = a.iter().copied().collect();
    match b.iter().find(|i| seen.contains(i)) {
        Some(i) => Err(Error::InvalidData(format!(
            "calibration data overlaps training data at index {i}"
        ))),
        None => Ok(()),
    }
}

fn symmetric<T: Real>(center: T, half: T) -> Interval<T> {
    if half.is_infinite() && half > T::zero() {
        Interval::full_line()
    } else {
        Interval {
            lower: center - half,
            upper: center + half,
        }
    }
}

/// Point-prediction wrapper with scores `|y − ŷ(x)|`.
pub struct PointConformal<T, P> {
    predictor: P,
    record: CalibrationRecord<T>,
}

impl<T: Real, P: PointPredictor<T>> PointConformal<T, P> {
    pub fn calibrate(predictor: P, cal: &Dataset<T>, alpha: T) -> Result<Self> {
        let record = calibrate(&PointMeasure(&predictor), cal, alpha)?;
        Ok(Self { predictor, record })
    }

    pub fn record(&self) -> &CalibrationRecord<T> {
        &self.record
    }
}

impl<T: Real, P: PointPredictor<T>> IntervalEstimator<T> for PointConformal<T, P> {
    fn interval(&self, x: &[T]) -> Interval<T> {
        symmetric(self.predictor.predict(x), self.record.critical)
    }

    fn point(&self, x: &[T]) -> Option<T> {
        Some(self.predictor.predict(x))
    }

    fn alpha(&self) -> T {
        self.record.alpha
    }

    fn method(&self) -> &str {
        "icp_point"
    }
}

/// Normalized wrapper with scores `|y − ŷ(x)| / σ(x)` and intervals
/// `ŷ(x) ± α* σ(x)`. A test-time dispersion `σ(x) ≤ 0` yields `[ŷ, ŷ]`.
pub struct NormalizedConformal<T, P, S> {
    predictor: P,
    dispersion: S,
    record: CalibrationRecord<T>,
}

impl<T: Real, P: PointPredictor<T>, S: PointPredictor<T>> NormalizedConformal<T, P, S> {
    pub fn calibrate(predictor: P, dispersion: S, cal: &Dataset<T>, alpha: T) -> Result<Self> {
        let mut scores = Vec::with_capacity(cal.n());
        for (i, x) in cal.rows().enumerate() {
            let s = dispersion.predict(x);
            if !(s > T::zero()) {
                return Err(Error::NonPositiveDispersion {
                    index: i,
                    value: s.to_f64_lossy(),
                });
            }
            scores.push((cal.target(i) - predictor.predict(x)).abs() / s);
        }
        Ok(Self {
            record: CalibrationRecord::from_scores(&scores, alpha)?,
            predictor,
            dispersion,
        })
    }

    pub fn record(&self) -> &CalibrationRecord<T> {
        &self.record
    }
}

impl<T: Real, P: PointPredictor<T>, S: PointPredictor<T>> IntervalEstimator<T> for NormalizedConformal<T, P, S> {
    fn interval(&self, x: &[T]) -> Interval<T> {
        let y = self.predictor.predict(x);
        let s = self.dispersion.predict(x);
        if s > T::zero() {
            symmetric(y, self.record.critical * s)
        } else {
            Interval { lower: y, upper: y }
        }
    }

    fn point(&self, x: &[T]) -> Option<T> {
        Some(self.predictor.predict(x))
    }

    fn alpha(&self) -> T {
        self.record.alpha
    }

    fn method(&self) -> &str {
        "icp_normalized"
    }
}

/// Interval wrapper with scores `max(l(x) − y, y − u(x))` and intervals
/// `[l(x) − α*, u(x) + α*]`. When a negative `α*` would make the bounds
/// cross, the interval collapses to the midpoint.
pub struct IntervalConformal<T, E> {
    base: E,
    record: CalibrationRecord<T>,
}

impl<T: Real, E: IntervalEstimator<T>> IntervalConformal<T, E> {
    pub fn calibrate(base: E, cal: &Dataset<T>, alpha: T) -> Result<Self> {
        let record = calibrate(&IntervalMeasure(&base), cal, alpha)?;
        Ok(Self { base, record })
    }

    pub fn record(&self) -> &CalibrationRecord<T> {
        &self.record
    }

    pub fn base(&self) -> &E {
        &self.base
    }
}

impl<T: Real, E: IntervalEstimator<T>> IntervalEstimator<T> for IntervalConformal<T, E> {
    fn interval(&self, x: &[T]) -> Interval<T> {
        let c = self.record.critical;
        if c.is_infinite() && c > T::zero() {
            return Interval::full_line();
        }
        let b = self.base.interval(x);
        let (lower, upper) = (b.lower - c, b.upper + c);
        if lower <= upper {
            Interval { lower, upper }
        } else {
            let m = (b.lower + b.upper) / T::lit(2.0);
            Interval { lower: m, upper: m }
        }
    }

    fn point(&self, x: &[T]) -> Option<T> {
        self.base.point(x)
    }

    fn alpha(&self) -> T {
        self.record.alpha
    }

    fn method(&self) -> &str {
        "icp_interval"
    }
}

/// Out-of-bag wrapper: scores `|yᵢ − ŷ₍ᵢ₎(xᵢ)|` over the training rows with a
/// non-empty out-of-bag ensemble, intervals `ŷ(x) ± α*` with the full forest.
#[derive(Clone, Debug)]
pub struct OobConformal<T> {
    forest: Arc<Forest<T>>,
    record: CalibrationRecord<T>,
}

impl<T: Real> OobConformal<T> {
    pub fn calibrate(forest: impl Into<Arc<Forest<T>>>, train: &Dataset<T>, alpha: T) -> Result<Self> {
        let forest = forest.into();
        let residuals = forest.oob_residuals(train)?;
        Self::from_residuals(forest, &residuals, alpha)
    }

    /// Scores are the absolute values of the given signed residuals.
    pub fn from_residuals(forest: impl Into<Arc<Forest<T>>>, residuals: &[T], alpha: T) -> Result<Self> {
        let scores: Vec<T> = residuals.iter().map(|r| r.abs()).collect();
        Ok(Self {
            forest: forest.into(),
            record: CalibrationRecord::from_scores(&scores, alpha)?,
        })
    }

    pub fn record(&self) -> &CalibrationRecord<T> {
        &self.record
    }
}

impl<T: Real> IntervalEstimator<T> for OobConformal<T> {
    fn interval(&self, x: &[T]) -> Interval<T> {
        symmetric(PointPredictor::predict(&*self.forest, x), self.record.critical)
    }

    fn point(&self, x: &[T]) -> Option<T> {
        Some(PointPredictor::predict(&*self.forest, x))
    }

    fn alpha(&self) -> T {
        self.record.alpha
    }

    fn method(&self) -> &str {
        "icp_oob"
    }
}

/// `|y − ŷ(x)|`.
pub struct PointMeasure<P>(pub P);

impl<T: Real, P: PointPredictor<T>> NonconformityMeasure<T> for PointMeasure<P> {
    fn score(&self, x: &[T], y: T) -> T {
        (y - self.0.predict(x)).abs()
    }
}

/// `|y − ŷ(x)| / σ(x)`.
pub struct NormalizedMeasure<P, S> {
    pub predictor: P,
    pub dispersion: S,
}

impl<T: Real, P: PointPredictor<T>, S: PointPredictor<T>> NonconformityMeasure<T> for NormalizedMeasure<P, S> {
    fn score(&self, x: &[T], y: T) -> T {
        (y - self.predictor.predict(x)).abs() / self.dispersion.predict(x)
    }
}

/// `max(l(x) − y, y − u(x))`.
pub struct IntervalMeasure<E>(pub E);

impl<T: Real, E: IntervalEstimator<T>> NonconformityMeasure<T> for IntervalMeasure<E> {
    fn score(&self, x: &[T], y: T) -> T {
        let i = self.0.interval(x);
        (i.lower - y).max(y - i.upper)
    }
}

/// Test-time out-of-bag score `|y − ŷ(x)|` with the full forest.
pub struct OobMeasure<'a, T>(pub &'a Forest<T>);

impl<T: Real> NonconformityMeasure<T> for OobMeasure<'_, T> {
    fn score(&self, x: &[T], y: T) -> T {
        (y - PointPredictor::predict(self.0, x)).abs()
    }
}

impl<T, M: NonconformityMeasure<T> + ?Sized> NonconformityMeasure<T> for &M {
    fn score(&self, x: &[T], y: T) -> T {
        (**self).score(x, y)
    }
}

pub fn conformalize_point<T: Real, P: PointPredictor<T>>(
    model: P,
    cal: &Dataset<T>,
    alpha: T,
) -> Result<PointConformal<T, P>> {
    PointConformal::calibrate(model, cal, alpha)
}

pub fn conformalize_normalized<T: Real, P: PointPredictor<T>, S: PointPredictor<T>>(
    model: P,
    dispersion: S,
    cal: &Dataset<T>,
    alpha: T,
) -> Result<NormalizedConformal<T, P, S>> {
    NormalizedConformal::calibrate(model, dispersion, cal, alpha)
}

pub fn conformalize_interval<T: Real, E: IntervalEstimator<T>>(
    est: E,
    cal: &Dataset<T>,
    alpha: T,
) -> Result<IntervalConformal<T, E>> {
    IntervalConformal::calibrate(est, cal, alpha)
}

pub fn conformalize_oob<T: Real>(
    forest: impl Into<Arc<Forest<T>>>,
    train: &Dataset<T>,
    alpha: T,
) -> Result<OobConformal<T>> {
    OobConformal::calibrate(forest, train, alpha)
}

/// Point prediction of an interval estimator, falling back to the midpoint.
pub struct EstimatorPoint<E>(pub E);

impl<T: Real, E: IntervalEstimator<T>> PointPredictor<T> for EstimatorPoint<E> {
    fn predict(&self, x: &[T]) -> T {
        self.0.point(x).unwrap_or_else(|| {
            let i = self.0.interval(x);
            (i.lower + i.upper) / T::lit(2.0)
        })
    }
}

/// Standard deviation implied by a symmetric Gaussian interval: half-width
/// over `z^α`.
pub struct EstimatorSpread<E>(pub E);

impl<T: Real, E: IntervalEstimator<T>> PointPredictor<T> for EstimatorSpread<E> {
    fn predict(&self, x: &[T]) -> T {
        self.0.interval(x).width() / (T::lit(2.0) * z_score(self.0.alpha()))
    }
}
