//! Interval type, the estimator contract and every non-conformal interval
//! estimator: Gaussian ensemble intervals (MC dropout, dropout-MVE, deep
//! ensembles, GP), out-of-bag forest intervals, quantile regression forests
//! and the direct quantile/QD networks.

use std::sync::Arc;

use crate::conformal::empirical_quantile;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::gp::GpModel;
use crate::nn::NetParams;
use crate::rng;
use crate::scalar::Real;

/// Closed interval with extended-real endpoints, `lower ≤ upper`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Real> Interval<T> {
    pub fn new(lower: T, upper: T) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::InvalidArgument(format!("invalid interval [{lower}, {upper}]")));
        }
        Ok(Self { lower, upper })
    }

    /// Orders the endpoints, so crossing bounds are swapped.
    pub fn ordered(a: T, b: T) -> Self {
        if a <= b {
            Self { lower: a, upper: b }
        } else {
            Self { lower: b, upper: a }
        }
    }

    pub fn full_line() -> Self {
        Self {
            lower: T::neg_infinity(),
            upper: T::infinity(),
        }
    }

    pub fn contains(&self, y: T) -> bool {
        self.lower <= y && y <= self.upper
    }

    pub fn width(&self) -> T {
        self.upper - self.lower
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    pub fn contains_interval(&self, other: &Self) -> bool {
        self.lower <= other.lower && other.upper <= self.upper
    }
}

/// Anything producing a point prediction from a feature vector.
pub trait PointPredictor<T>: Send + Sync {
    fn predict(&self, x: &[T]) -> T;
}

/// A trained model mapping a feature vector to an interval at a fixed
/// significance level. Implementations are deterministic.
pub trait IntervalEstimator<T>: Send + Sync {
    fn interval(&self, x: &[T]) -> Interval<T>;

    fn point(&self, _x: &[T]) -> Option<T> {
        None
    }

    fn alpha(&self) -> T;

    fn method(&self) -> &str;
}

impl<T, P: PointPredictor<T> + ?Sized> PointPredictor<T> for Arc<P> {
    fn predict(&self, x: &[T]) -> T {
        (**self).predict(x)
    }
}

impl<T, P: PointPredictor<T> + ?Sized> PointPredictor<T> for &P {
    fn predict(&self, x: &[T]) -> T {
        (**self).predict(x)
    }
}

impl<T, P: PointPredictor<T> + ?Sized> PointPredictor<T> for Box<P> {
    fn predict(&self, x: &[T]) -> T {
        (**self).predict(x)
    }
}

impl<T, E: IntervalEstimator<T> + ?Sized> IntervalEstimator<T> for Arc<E> {
    fn interval(&self, x: &[T]) -> Interval<T> {
        (**self).interval(x)
    }
    fn point(&self, x: &[T]) -> Option<T> {
        (**self).point(x)
    }
    fn alpha(&self) -> T {
        (**self).alpha()
    }
    fn method(&self) -> &str {
        (**self).method()
    }
}

impl<T, E: IntervalEstimator<T> + ?Sized> IntervalEstimator<T> for &E {
    fn interval(&self, x: &[T]) -> Interval<T> {
        (**self).interval(x)
    }
    fn point(&self, x: &[T]) -> Option<T> {
        (**self).point(x)
    }
    fn alpha(&self) -> T {
        (**self).alpha()
    }
    fn method(&self) -> &str {
        (**self).method()
    }
}

impl<T, E: IntervalEstimator<T> + ?Sized> IntervalEstimator<T> for Box<E> {
    fn interval(&self, x: &[T]) -> Interval<T> {
        (**self).interval(x)
    }
    fn point(&self, x: &[T]) -> Option<T> {
        (**self).point(x)
    }
    fn alpha(&self) -> T {
        (**self).alpha()
    }
    fn method(&self) -> &str {
        (**self).method()
    }
}

/// First output head, dropout off.
impl<T: Real> PointPredictor<T> for NetParams<T> {
    fn predict(&self, x: &[T]) -> T {
        NetParams::predict(self, x).expect("feature dimension matches the network")[0]
    }
}

/// Closure-backed predictor, handy for fixed functions and tests.
pub struct FnPredictor<F>(pub F);

impl<T, F: Fn(&[T]) -> T + Send + Sync> PointPredictor<T> for FnPredictor<F> {
    fn predict(&self, x: &[T]) -> T {
        (self.0)(x)
    }
}

fn check_alpha<T: Real>(alpha: T) -> Result<()> {
    if alpha > T::zero() && alpha < T::one() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("significance level {alpha} outside (0, 1)")))
    }
}

/// Standard normal quantile `Φ⁻¹(p)` (Acklam's rational approximation,
/// relative error below 1.2e-9 on `(0, 1)`).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Two-tailed z-score `Φ⁻¹(1 − α/2)`.
pub fn z_score<T: Real>(alpha: T) -> T {
    T::lit(normal_quantile(1.0 - alpha.to_f64_lossy() / 2.0))
}

/// `[μ − z^α σ, μ + z^α σ]`.
pub fn gaussian_interval<T: Real>(mu: T, sigma: T, alpha: T) -> Interval<T> {
    let half = z_score(alpha) * sigma;
    Interval {
        lower: mu - half,
        upper: mu + half,
    }
}

/// Ensemble mean and population standard deviation (divide by `R`).
pub fn ensemble_moments<T: Real>(preds: &[T]) -> Result<(T, T)> {
    if preds.len() < 2 {
        return Err(Error::InvalidArgument(format!("ensemble needs R ≥ 2 members, got {}", preds.len())));
    }
    Ok(crate::scalar::mean_std(preds))
}

/// Moments of the uniform Gaussian mixture with component `(means[i],
/// variances[i])`: `σ² = (1/R)Σμᵢ² − ((1/R)Σμᵢ)² + (1/R)Σσᵢ²`.
pub fn mve_moments<T: Real>(means: &[T], variances: &[T]) -> Result<(T, T)> {
    if means.len() != variances.len() {
        return Err(Error::Dimension {
            expected: means.len(),
            got: variances.len(),
        });
    }
    if means.is_empty() {
        return Err(Error::Empty("mixture"));
    }
    if variances.iter().any(|&v| v < T::zero()) {
        return Err(Error::InvalidArgument("negative component variance".into()));
    }
    let (mu, spread) = crate::scalar::mean_std(means);
    let aleatoric = crate::scalar::mean(variances);
    Ok((mu, (spread * spread + aleatoric).sqrt()))
}

fn frozen_seeds(passes: usize, seed: u64) -> Vec<u64> {
    (0..passes as u64).map(|k| rng::derive_seed(seed, k)).collect()
}

/// MC-dropout ensemble: `R` dropout-active passes with frozen seeds,
/// Gaussian interval over their mean and population spread.
#[derive(Clone, Debug)]
pub struct DropoutEstimator<T> {
    net: Arc<NetParams<T>>,
    seeds: Vec<u64>,
    alpha: T,
}

impl<T: Real> DropoutEstimator<T> {
    pub fn new(net: impl Into<Arc<NetParams<T>>>, passes: usize, alpha: T, seed: u64) -> Result<Self> {
        let net = net.into();
        if net.dropout() <= T::zero() {
            return Err(Error::InvalidArgument("MC dropout needs a dropout probability > 0".into()));
        }
        if passes < 2 {
            return Err(Error::InvalidArgument("MC dropout needs R ≥ 2 passes".into()));
        }
        check_alpha(alpha)?;
        Ok(Self {
            net,
            seeds: frozen_seeds(passes, seed),
            alpha,
        })
    }

    /// Outputs of the frozen dropout passes at `x` (first head).
    pub fn passes(&self, x: &[T]) -> Vec<T> {
        self.seeds
            .iter()
            .map(|&s| self.net.forward(x, true, s).expect("feature dimension")[0])
            .collect()
    }

    pub fn moments(&self, x: &[T]) -> (T, T) {
        ensemble_moments(&self.passes(x)).expect("R ≥ 2 checked at construction")
    }
}

impl<T: Real> IntervalEstimator<T> for DropoutEstimator<T> {
    fn interval(&self, x: &[T]) -> Interval<T> {
        let (mu, sigma) = self.moments(x);
        gaussian_interval(mu, sigma, self.alpha)
    }

    fn point(&self, x: &[T]) -> Option<T> {
        Some(self.moments(x).0)
    }

    fn alpha(&self) -> T {
        self.alpha
    }

    fn method(&self) -> &str {
        "drop"
    }
}

/// Dropout mean-variance estimator: each pass yields `(mean, log σ²)`; the
/// interval uses the mixture-matched moments of the passes.
#[derive(Clone, Debug)]
pub struct MveEstimator<T> {
    net: Arc<NetParams<T>>,
    seeds: Vec<u64>,
    alpha: T,
}

impl<T: Real> MveEstimator<T> {
    pub fn new(net: impl Into<Arc<NetParams<T>>>, passes: usize, alpha: T, seed: u64) -> Result<Self> {
        let net = net.into();
        if net.dropout() <= T::zero() {
            return Err(Error::InvalidArgument("MC dropout needs a dropout probability > 0".into()));
        }
        if passes < 2 {
            return Err(Error::InvalidArgument("MC dropout needs R ≥ 2 passes".into()));
        }
        Self::from_seeds(net, frozen_seeds(passes, seed), alpha)
    }

    /// Explicit pass seeds; no check on the dropout probability, so a
    /// dropout-free network gives `R` identical passes.
    pub fn from_seeds(net: impl Into<Arc<NetParams<T>>>, seeds: Vec<u64>, alpha: T) -> Result<Self> {
        let net = net.into();
        if net.n_outputs() != 2 {
            return Err(Error::Dimension {
                expected: 2,
                got: net.n_outputs(),
            });
        }
        if seeds.is_empty() {
            return Err(Error::Empty("pass seeds"));
        }
        check_alpha(alpha)?;
        Ok(Self { net, seeds, alpha })
    }

    /// `(means, variances)` of the frozen passes at `x`.
    pub fn passes(&self, x: &[T]) -> (Vec<T>, Vec<T>) {
        self.seeds
            .iter()
            .map(|&s| {
                let out = self.net.forward(x, true, s).expect("feature dimension");
                (out[0], out[1].exp())
            })
            .unzip()
    }

    pub fn moments(&self, x: &[T]) -> (T, T) {
        let (m, v) = self.passes(x);
        mve_moments(&m, &v).expect("non-empty passes")
    }
}

impl<T: Real> IntervalEstimator<T> for MveEstimator<T> {
    fn interval(&self, x: &[T]) -> Interval<T> {
        let (mu, sigma) = self.moments(x);
        gaussian_interval(mu, sigma, self.alpha)
    }

    fn point(&self, x: &[T]) -> Option<T> {
        Some(self.moments(x).0)
    }

    fn alpha(&self) -> T {
        self.alpha
    }

    fn method(&self) -> &str {
        "mve"
    }
}

/// Ensemble of independently initialized `(mean, log σ²)` networks.
#[derive(Clone, Debug)]
pub struct DeepEnsembleEstimator<T> {
    nets: Vec<Arc<NetParams<T>>>,
    alpha: T,
}

impl<T: Real> DeepEnsembleEstimator<T> {
    pub fn new(nets: Vec<Arc<NetParams<T>>>, alpha: T) -> Result<Self> {
        if nets.is_empty() {
            return Err(Error::Empty("ensemble"));
        }
        if let Some(bad) = nets.iter().find(|n| n.n_outputs() != 2) {
            return Err(Error::Dimension {
                expected: 2,
                got: bad.n_outputs(),
            });
        }
        check_alpha(alpha)?;
        Ok(Self { nets, alpha })
    }

    pub fn member_outputs(&self, x: &[T]) -> (Vec<T>, Vec<T>) {
        self.nets
            .iter()
            .map(|n| {
                let out = NetParams::predict(n, x).expect("feature dimension");
                (out[0], out[1].exp())
            })
            .unzip()
    }

    pub fn moments(&self, x: &[T]) -> (T, T) {
        let (m, v) = self.member_outputs(x);
        mve_moments(&m, &v).expect("non-empty ensemble")
    }
}

impl<T: Real> IntervalEstimator<T> for DeepEnsembleEstimator<T> {
    fn interval(&self, x: &[T]) -> Interval<T> {
        let (mu, sigma) = self.moments(x);
        gaussian_interval(mu, sigma, self.alpha)
    }

    fn point(&self, x: &[T]) -> Option<T> {
        Some(self.moments(x).0)
    }

    fn alpha(&self) -> T {
        self.alpha
    }

    fn method(&self) -> &str {
        "de"
    }
}

/// Full-forest prediction shifted by the `α/2` and `1 − α/2` empirical
/// quantiles of the signed out-of-bag errors `D = {yᵢ − ŷ₍ᵢ₎(xᵢ)}`.
#[derive(Clone, Debug)]
pub struct OobIntervalEstimator<T> {
    forest: Arc<Forest<T>>,
    lower_shift: T,
    upper_shift: T,
    alpha: T,
}

impl<T: Real> OobIntervalEstimator<T> {
    pub fn new(forest: impl Into<Arc<Forest<T>>>, train: &Dataset<T>, alpha: T) -> Result<Self> {
        let forest = forest.into();
        let residuals = forest.oob_residuals(train)?;
        Self::from_residuals(forest, &residuals, alpha)
    }

    /// Uses an explicit signed error multiset `D`.
    pub fn from_residuals(forest: impl Into<Arc<Forest<T>>>, residuals: &[T], alpha: T) -> Result<Self> {
        check_alpha(alpha)?;
        if residuals.is_empty() {
            return Err(Error::Empty("out-of-bag error distribution"));
        }
        let half = alpha / T::lit(2.0);
        Ok(Self {
            forest: forest.into(),
            lower_shift: empirical_quantile(residuals, half)?,
            upper_shift: empirical_quantile(residuals, T::one() - half)?,
            alpha,
        })
    }

    pub fn shifts(&self) -> (T, T) {
        (self.lower_shift, self.upper_shift)
    }
}

impl<T: Real> IntervalEstimator<T> for OobIntervalEstimator<T> {
    fn interval(&self, x: &[T]) -> Interval<T> {
        let y = PointPredictor::predict(&*self.forest, x);
        Interval::ordered(y + self.lower_shift, y + self.upper_shift)
    }

    fn point(&self, x: &[T]) -> Option<T> {
        Some(PointPredictor::predict(&*self.forest, x))
    }

    fn alpha(&self) -> T {
        self.alpha
    }

    fn method(&self) -> &str {
        "rf_oob"
    }
}

/// Quantile regression forest interval `[q̂(α/2), q̂(1 − α/2)]`.
#[derive(Clone, Debug)]
pub struct QrfEstimator<T> {
    forest: Arc<Forest<T>>,
    alpha: T,
}

impl<T: Real> QrfEstimator<T> {
    pub fn new(forest: impl Into<Arc<Forest<T>>>, alpha: T) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            forest: forest.into(),
            alpha,
        })
    }
}

impl<T: Real> IntervalEstimator<T> for QrfEstimator<T> {
    fn interval(&self, x: &[T]) -> Interval<T> {
        let half = self.alpha / T::lit(2.0);
        Interval::ordered(
            self.forest.qrf_quantile(x, half),
            self.forest.qrf_quantile(x, T::one() - half),
        )
    }

    fn point(&self, x: &[T]) -> Option<T> {
        Some(PointPredictor::predict(&*self.forest, x))
    }

    fn alpha(&self) -> T {
        self.alpha
    }

    fn method(&self) -> &str {
        "qrf"
    }
}

/// Quantile levels `(wα/2, 1 − wα/2)` of a softened quantile regressor.
pub fn qr_levels<T: Real>(alpha: T, softening: T) -> Result<(T, T)> {
    let low = softening * alpha / T::lit(2.0);
    if !(low > T::zero() && low < T::lit(0.5)) {
        return Err(Error::InvalidArgument(format!("softened level {low} outside (0, 0.5)")));
    }
    Ok((low, T::one() - low))
}

/// Interval straight from the first and last heads of a network (swapped
/// when they cross). With three heads the middle one is reported as the
/// point prediction (the median head of a quantile regressor).
#[derive(Clone, Debug)]
pub struct HeadIntervalEstimator<T> {
    net: Arc<NetParams<T>>,
    alpha: T,
    method: &'static str,
}

impl<T: Real> HeadIntervalEstimator<T> {
    fn build(net: Arc<NetParams<T>>, alpha: T, method: &'static str) -> Result<Self> {
        if net.n_outputs() < 2 {
            return Err(Error::Dimension {
                expected: 2,
                got: net.n_outputs(),
            });
        }
        check_alpha(alpha)?;
        Ok(Self { net, alpha, method })
    }

    /// Quantile-regression network trained on the levels of [`qr_levels`].
    pub fn quantile(net: impl Into<Arc<NetParams<T>>>, alpha: T) -> Result<Self> {
        Self::build(net.into(), alpha, "qr")
    }

    /// Network trained with the QD (or LUBE) loss.
    pub fn qd(net: impl Into<Arc<NetParams<T>>>, alpha: T) -> Result<Self> {
        Self::build(net.into(), alpha, "qd")
    }
}

impl<T: Real> IntervalEstimator<T> for HeadIntervalEstimator<T> {
    fn interval(&self, x: &[T]) -> Interval<T> {
        let out = NetParams::predict(&self.net, x).expect("feature dimension");
        Interval::ordered(out[0], out[out.len() - 1])
    }

    fn point(&self, x: &[T]) -> Option<T> {
        if self.net.n_outputs() == 3 {
            Some(NetParams::predict(&self.net, x).expect("feature dimension")[1])
        } else {
            None
        }
    }

    fn alpha(&self) -> T {
        self.alpha
    }

    fn method(&self) -> &str {
        self.method
    }
}

/// Gaussian interval from the GP predictive distribution.
#[derive(Clone, Debug)]
pub struct GpEstimator<T> {
    gp: Arc<GpModel<T>>,
    alpha: T,
}

impl<T: Real> GpEstimator<T> {
    pub fn new(gp: impl Into<Arc<GpModel<T>>>, alpha: T) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { gp: gp.into(), alpha })
    }

    pub fn moments(&self, x: &[T]) -> (T, T) {
        let (m, v) = self.gp.posterior(x).expect("feature dimension");
        (m, v.sqrt())
    }
}

impl<T: Real> IntervalEstimator<T> for GpEstimator<T> {
    fn interval(&self, x: &[T]) -> Interval<T> {
        let (mu, sigma) = self.moments(x);
        gaussian_interval(mu, sigma, self.alpha)
    }

    fn point(&self, x: &[T]) -> Option<T> {
        Some(self.moments(x).0)
    }

    fn alpha(&self) -> T {
        self.alpha
    }

    fn method(&self) -> &str {
        "gp"
    }
}

/// Point predictor with a constant Gaussian spread `ŷ(x) ± z^α σ`.
pub struct ConstantGaussianEstimator<T, P> {
    predictor: P,
    sigma: T,
    alpha: T,
}

impl<T: Real, P: PointPredictor<T>> ConstantGaussianEstimator<T, P> {
    pub fn new(predictor: P, sigma: T, alpha: T) -> Result<Self> {
        check_alpha(alpha)?;
        if !(sigma >= T::zero()) {
            return Err(Error::InvalidArgument("spread must be non-negative".into()));
        }
        Ok(Self { predictor, sigma, alpha })
    }

    /// Spread set to the population standard deviation of the residuals on `ds`.
    pub fn from_residuals(predictor: P, ds: &Dataset<T>, alpha: T) -> Result<Self> {
        let r: Vec<T> = ds.rows().enumerate().map(|(i, x)| ds.target(i) - predictor.predict(x)).collect();
        let (_, s) = crate::scalar::mean_std(&r);
        Self::new(predictor, s, alpha)
    }
}

impl<T: Real, P: PointPredictor<T>> IntervalEstimator<T> for ConstantGaussianEstimator<T, P> {
    fn interval(&self, x: &[T]) -> Interval<T> {
        gaussian_interval(self.predictor.predict(x), self.sigma, self.alpha)
    }

    fn point(&self, x: &[T]) -> Option<T> {
        Some(self.predictor.predict(x))
    }

    fn alpha(&self) -> T {
        self.alpha
    }

    fn method(&self) -> &str {
        "gauss_const"
    }
}

/// Featureless estimator returning a fixed interval everywhere.
#[derive(Clone, Copy, Debug)]
pub struct ConstantEstimator<T> {
    pub interval: Interval<T>,
    pub alpha: T,
}

impl<T: Real> IntervalEstimator<T> for ConstantEstimator<T> {
    fn interval(&self, _x: &[T]) -> Interval<T> {
        self.interval
    }

    fn alpha(&self) -> T {
        self.alpha
    }

    fn method(&self) -> &str {
        "constant"
    }
}
