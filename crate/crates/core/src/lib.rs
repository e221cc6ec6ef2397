//! Prediction intervals for regression.
//!
//! Four families of interval estimators share one contract
//! ([`IntervalEstimator`]):
//!
//! - Bayesian: exact Gaussian-process regression ([`gp`]).
//! - Ensembles: MC-dropout, mean-variance dropout networks, deep ensembles
//!   and out-of-bag forest intervals ([`intervals`], [`forest`]).
//! - Direct interval learners: pinball-loss quantile networks and
//!   quality-driven (QD) interval networks ([`nn`], [`intervals`]).
//! - Inductive conformal prediction wrapping any of the above ([`conformal`]).
//!
//! [`metrics`] scores estimators on held-out data and [`bench`] runs the
//! repeated-split evaluation protocol behind the `predint` binary.
//!
//! The numerical core is generic over the scalar type through [`Real`]
//! (implemented for `f32` and `f64`); the `*64` aliases below pin the
//! double-precision instantiations used by the benchmark runner.
//!
//! ```
//! use predint::conformal::PointConformal;
//! use predint::data::{self, SyntheticKind, SyntheticSpec};
//! use predint::linear::Ridge;
//! use predint::IntervalEstimator;
//!
//! let ds = data::gen_synthetic::<f64>(&SyntheticSpec::new(SyntheticKind::LinearHomoscedastic, 1000, 3, 0.5), 1)?;
//! let split = data::split(&ds, 0, 0.2, 0.5)?;
//! let (train, cal, test) = (ds.subset(&split.train_idx)?, ds.subset(&split.cal_idx)?, ds.subset(&split.test_idx)?);
//! let model = Ridge::fit(&train, 1e-6)?;
//! let cp = PointConformal::calibrate(model, &cal, 0.1)?;
//! let iv = cp.interval(test.row(0));
//! assert!(iv.lower <= iv.upper);
//! # Ok::<(), predint::Error>(())
//! ```

pub mod bench;
pub mod conformal;
pub mod data;
pub mod error;
pub mod forest;
pub mod gp;
pub mod intervals;
pub mod linalg;
pub mod linear;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use intervals::{Interval, IntervalEstimator, PointPredictor};
pub use scalar::Real;

pub type Dataset64 = data::Dataset<f64>;
pub type ScalerParams64 = data::ScalerParams<f64>;
pub type Interval64 = intervals::Interval<f64>;
pub type NetParams64 = nn::NetParams<f64>;
pub type Forest64 = forest::Forest<f64>;
pub type GpModel64 = gp::GpModel<f64>;
pub type GpHyper64 = gp::GpHyper<f64>;
pub type CalibrationRecord64 = conformal::CalibrationRecord<f64>;
pub type MetricsReport64 = metrics::MetricsReport<f64>;

pub type Dataset32 = data::Dataset<f32>;
pub type Interval32 = intervals::Interval<f32>;
pub type NetParams32 = nn::NetParams<f32>;
pub type Forest32 = forest::Forest<f32>;
