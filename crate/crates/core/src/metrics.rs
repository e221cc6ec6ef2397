//! Evaluation metrics for interval estimators on a labelled test set.

use crate::conformal::empirical_quantile;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::intervals::{Interval, IntervalEstimator};
use crate::scalar::Real;

fn check_lengths<T>(a: &[T], b: &[Interval<T>]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("test set"));
    }
    Ok(())
}

/// Fraction of test targets inside their (closed) interval.
pub fn estimator_coverage<T: Real, E: IntervalEstimator<T> + ?Sized>(est: &E, test: &Dataset<T>) -> Result<T> {
    let ints: Vec<Interval<T>> = test.rows().map(|x| est.interval(x)).collect();
    coverage(&ints, test.targets())
}

/// Fraction of targets inside their (closed) interval.
pub fn coverage<T: Real>(intervals: &[Interval<T>], targets: &[T]) -> Result<T> {
    check_lengths(targets, intervals)?;
    let hits = intervals.iter().zip(targets).filter(|(i, &y)| i.contains(y)).count();
    Ok(T::from_count(hits) / T::from_count(targets.len()))
}

/// Average width; `+∞` if any interval is unbounded.
pub fn mean_width<T: Real>(intervals: &[Interval<T>]) -> Result<T> {
    if intervals.is_empty() {
        return Err(Error::Empty("interval set"));
    }
    if intervals.iter().any(|i| !i.is_bounded()) {
        return Ok(T::infinity());
    }
    let total: T = intervals.iter().map(Interval::width).sum();
    Ok(total / T::from_count(intervals.len()))
}

/// Coefficient of determination `1 − SSE/SST` with the population mean.
pub fn r2<T: Real>(preds: &[T], targets: &[T]) -> Result<T> {
    if preds.len() != targets.len() {
        return Err(Error::Dimension {
            expected: targets.len(),
            got: preds.len(),
        });
    }
    if targets.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mean = crate::scalar::mean(targets);
    let sst: T = targets.iter().map(|&y| (y - mean) * (y - mean)).sum();
    if sst <= T::zero() {
        return Err(Error::ZeroVariance);
    }
    let sse: T = preds.iter().zip(targets).map(|(&p, &y)| (y - p) * (y - p)).sum();
    Ok(T::one() - sse / sst)
}

/// Gap between the `1 − α/2` and `α/2` empirical quantiles of the targets.
pub fn target_quantile_gap<T: Real>(targets: &[T], alpha: T) -> Result<T> {
    let half = alpha / T::lit(2.0);
    Ok(empirical_quantile(targets, T::one() - half)? - empirical_quantile(targets, half)?)
}

/// Mean width divided by the quantile gap of the unconditional targets.
pub fn relative_width<T: Real>(intervals: &[Interval<T>], targets_all: &[T], alpha: T) -> Result<T> {
    let gap = target_quantile_gap(targets_all, alpha)?;
    if gap <= T::zero() {
        return Err(Error::ZeroVariance);
    }
    Ok(mean_width(intervals)? / gap)
}

/// Metrics of one estimator on one test set. `r2` is `None` when the
/// estimator has no point prediction or the targets are constant.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport<T> {
    pub coverage: T,
    pub mean_width: T,
    pub relative_width: T,
    pub r2: Option<T>,
    pub n_test: usize,
}

impl<T: Real> MetricsReport<T> {
    /// `targets_all` is the unconditional target sample behind the relative width.
    pub fn evaluate<E: IntervalEstimator<T> + ?Sized>(est: &E, test: &Dataset<T>, targets_all: &[T]) -> Result<Self> {
        let intervals: Vec<Interval<T>> = test.rows().map(|x| est.interval(x)).collect();
        let points: Option<Vec<T>> = test.rows().map(|x| est.point(x)).collect();
        Self::from_parts(&intervals, points.as_deref(), test.targets(), targets_all, est.alpha())
    }

    pub fn from_parts(
        intervals: &[Interval<T>],
        points: Option<&[T]>,
        targets: &[T],
        targets_all: &[T],
        alpha: T,
    ) -> Result<Self> {
        let r2 = match points {
            Some(p) => match r2(p, targets) {
                Ok(v) => Some(v),
                Err(Error::ZeroVariance) => None,
                Err(e) => return Err(e),
            },
            None => None,
        };
        let relative_width = match relative_width(intervals, targets_all, alpha) {
            Ok(v) => v,
            Err(Error::ZeroVariance) => T::infinity(),
            Err(e) => return Err(e),
        };
        Ok(Self {
            coverage: coverage(intervals, targets)?,
            mean_width: mean_width(intervals)?,
            relative_width,
            r2,
            n_test: targets.len(),
        })
    }
}
