//! Experiment runner: repeated random splits, per-split standardization,
//! training, optional conformal calibration and metric collection.
//!
//! Configuration is TOML (schema version 1):
//!
//! ```toml
//! version = 1
//! alpha = 0.1            # default 0.1
//! n_splits = 50          # default 50
//! test_frac = 0.2        # default 0.2
//! cal_frac = 0.5         # default 0.5
//! base_seed = 0
//! unsafe_train_calibration = false
//! time_budget_secs = 600 # per method and split
//! record_timing = false  # wall_ms column is 0 unless set
//!
//! [data]
//! synthetic = { kind = "sine_heteroscedastic", n = 2000, d = 1, noise_scale = 0.3 }
//! seed = 7               # generator seed for synthetic data
//! # or: csv = "data.csv", target = "y", log_target = false
//!
//! [[methods]]
//! name = "rf_cp"
//! n_trees = 100
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{
    check_disjoint, EstimatorPoint, EstimatorSpread, IntervalConformal, NormalizedConformal, OobConformal,
    PointConformal,
};
use crate::data::{self, Dataset, ScalerParams, SyntheticSpec, TargetColumn};
use crate::error::{Error, Result};
use crate::forest::{Forest, ForestConfig};
use crate::gp::{fit_gp_until, GpHyper, GpModel};
use crate::intervals::{
    qr_levels, ConstantGaussianEstimator, DeepEnsembleEstimator, DropoutEstimator, HeadIntervalEstimator,
    IntervalEstimator, MveEstimator, OobIntervalEstimator, QrfEstimator,
};
use crate::linear::Ridge;
use crate::metrics::MetricsReport;
use crate::nn::{self, EarlyStopping, LossKind, NetParams, TrainConfig};
use crate::rng;

pub const CONFIG_VERSION: u32 = 1;

/// Every method identifier accepted in `[[methods]]`, with a description.
pub const METHODS: &[(&str, &str)] = &[
    ("nn_cp", "point network, conformalized with |y - ŷ|"),
    ("ridge", "ridge regression with a constant Gaussian residual interval"),
    ("ridge_cp", "ridge regression, conformalized with |y - ŷ|"),
    ("rf_cp", "random forest, conformalized with |y - ŷ|"),
    ("rf_oob", "random forest with out-of-bag error quantile interval"),
    ("rf_oob_cp", "random forest, out-of-bag conformal calibration on the training set"),
    ("qrf", "quantile regression forest"),
    ("qrf_cp", "quantile regression forest, conformalized interval"),
    ("drop", "MC-dropout network"),
    ("drop_cp", "MC-dropout network, normalized conformal"),
    ("mve", "dropout mean-variance network"),
    ("mve_cp", "dropout mean-variance network, normalized conformal"),
    ("de", "deep ensemble of mean-variance networks with FGSM training"),
    ("de_cp", "deep ensemble, normalized conformal"),
    ("gp", "exact Gaussian process"),
    ("gp_cp", "exact Gaussian process, normalized conformal"),
    ("qr", "quantile regression network"),
    ("qr_cp", "quantile regression network, conformalized interval"),
    ("qd", "quality-driven interval network"),
    ("qd_cp", "quality-driven interval network, conformalized interval"),
];

/// Dropout probabilities searched when `dropout` is not fixed.
pub fn dropout_grid() -> Vec<f64> {
    (1..=10).map(|k| k as f64 * 0.05).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    Index(usize),
    Name(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub target: Option<TargetSpec>,
    #[serde(default)]
    pub log_target: bool,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub seed: u64,
}

impl DataConfig {
    pub fn synthetic(spec: SyntheticSpec, seed: u64) -> Self {
        Self {
            csv: None,
            target: None,
            log_target: false,
            synthetic: Some(spec),
            seed,
        }
    }

    /// Relative CSV paths resolve against `base`.
    pub fn load(&self, base: Option<&Path>) -> Result<Dataset<f64>> {
        let ds = match (&self.csv, &self.synthetic) {
            (Some(path), None) => {
                let path = match base {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                let target = match &self.target {
                    Some(TargetSpec::Index(i)) => TargetColumn::Index(*i),
                    Some(TargetSpec::Name(n)) => TargetColumn::Name(n.clone()),
                    None => return Err(Error::Config("csv data needs a target column".into())),
                };
                data::load_csv(path, target)?
            }
            (None, Some(spec)) => data::gen_synthetic(spec, self.seed)?,
            _ => return Err(Error::Config("data needs exactly one of csv or synthetic".into())),
        };
        if self.log_target {
            ds.log_targets()
        } else {
            Ok(ds)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodSpec {
    pub name: String,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    /// `none`, `loss` or `interval`; uses the validation slice.
    pub early_stopping: String,
    pub patience: usize,
    /// Fixed dropout probability; tuned over [`dropout_grid`] when absent.
    pub dropout: Option<f64>,
    pub passes: usize,
    pub ensemble: usize,
    /// FGSM step as a fraction of each feature's range; 0 disables.
    pub adversarial: f64,
    pub softening: f64,
    pub qd_lambda: f64,
    pub softness: f64,
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub features_per_split: Option<usize>,
    pub ridge_lambda: f64,
    pub gp_iters: usize,
    /// Rows used for hyperparameter fitting; the posterior uses all rows.
    pub gp_fit_rows: usize,
    /// Share of proper-train held out for tuning and early stopping.
    pub val_frac: f64,
}

impl Default for MethodSpec {
    fn default() -> Self {
        Self {
            name: String::new(),
            hidden: nn::DEFAULT_HIDDEN,
            epochs: 100,
            learning_rate: 5e-4,
            l2: 1e-6,
            early_stopping: "none".into(),
            patience: 10,
            dropout: None,
            passes: 50,
            ensemble: 5,
            adversarial: 0.01,
            softening: 2.0,
            qd_lambda: 15.0,
            softness: LossKind::<f64>::DEFAULT_SOFTNESS,
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            features_per_split: None,
            ridge_lambda: 1e-6,
            gp_iters: 50,
            gp_fit_rows: 500,
            val_frac: 0.05,
        }
    }
}

impl MethodSpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !METHODS.iter().any(|(m, _)| *m == self.name) {
            return Err(Error::Config(format!("unknown method {:?}", self.name)));
        }
        if !["none", "loss", "interval"].contains(&self.early_stopping.as_str()) {
            return Err(Error::Config(format!("unknown early_stopping {:?}", self.early_stopping)));
        }
        if !(0.0..1.0).contains(&self.val_frac) {
            return Err(Error::Config("val_frac must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn base(&self) -> &str {
        self.name.strip_suffix("_cp").unwrap_or(&self.name)
    }

    fn conformal(&self) -> bool {
        self.name.ends_with("_cp")
    }
}

fn default_alpha() -> f64 {
    0.1
}
fn default_splits() -> usize {
    50
}
fn default_test() -> f64 {
    0.2
}
fn default_cal() -> f64 {
    0.5
}
fn default_budget() -> f64 {
    600.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub data: DataConfig,
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_splits")]
    pub n_splits: usize,
    #[serde(default = "default_test")]
    pub test_frac: f64,
    #[serde(default = "default_cal")]
    pub cal_frac: f64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub unsafe_train_calibration: bool,
    #[serde(default = "default_budget")]
    pub time_budget_secs: f64,
    #[serde(default)]
    pub record_timing: bool,
}

impl ExperimentConfig {
    pub fn new(data: DataConfig, methods: Vec<MethodSpec>) -> Self {
        Self {
            version: CONFIG_VERSION,
            data,
            methods,
            alpha: default_alpha(),
            n_splits: default_splits(),
            test_frac: default_test(),
            cal_frac: default_cal(),
            base_seed: 0,
            unsafe_train_calibration: false,
            time_budget_secs: default_budget(),
            record_timing: false,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config("alpha must lie in (0, 1)".into()));
        }
        if self.n_splits == 0 {
            return Err(Error::Config("n_splits must be positive".into()));
        }
        if !(self.time_budget_secs > 0.0) {
            return Err(Error::Config("time_budget_secs must be positive".into()));
        }
        self.methods.iter().try_for_each(MethodSpec::validate)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Ok,
    /// Out of time.
    OoT,
    /// Out of range: `R² < −1` or mean width above 100 target quantile gaps.
    OoR,
    Error,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::OoT => "OoT",
            Status::OoR => "OoR",
            Status::Error => "error",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub split: usize,
    pub metrics: Option<MetricsReport<f64>>,
    pub wall_ms: u64,
    pub status: Status,
    /// Tuned dropout probability, when tuning ran.
    pub tuned_dropout: Option<f64>,
    pub message: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let (mean, std) = crate::scalar::mean_std(values);
    Some(Summary { mean, std })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub method: String,
    pub n_rows: usize,
    pub n_excluded: usize,
    pub coverage: Option<Summary>,
    pub mean_width: Option<Summary>,
    pub relative_width: Option<Summary>,
    pub r2: Option<Summary>,
    pub wall_ms: Option<Summary>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<AggregateRow>,
}

/// Per-method population mean and std over `ok` rows with finite metrics.
/// Methods keep their first-appearance order.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.method.as_str()) {
            order.push(&r.method);
        }
    }
    order
        .into_iter()
        .map(|method| {
            let mine: Vec<&ResultRow> = rows.iter().filter(|r| r.method == method).collect();
            let kept: Vec<(&MetricsReport<f64>, u64)> = mine
                .iter()
                .filter(|r| r.status == Status::Ok)
                .filter_map(|r| r.metrics.as_ref().map(|m| (m, r.wall_ms)))
                .filter(|(m, _)| m.coverage.is_finite() && m.mean_width.is_finite() && m.relative_width.is_finite())
                .collect();
            let col = |f: &dyn Fn(&MetricsReport<f64>) -> f64| summarize(&kept.iter().map(|(m, _)| f(m)).collect::<Vec<_>>());
            let r2: Vec<f64> = kept.iter().filter_map(|(m, _)| m.r2).collect();
            AggregateRow {
                method: method.to_string(),
                n_rows: mine.len(),
                n_excluded: mine.len() - kept.len(),
                coverage: col(&|m| m.coverage),
                mean_width: col(&|m| m.mean_width),
                relative_width: col(&|m| m.relative_width),
                r2: summarize(&r2),
                wall_ms: summarize(&kept.iter().map(|(_, w)| *w as f64).collect::<Vec<_>>()),
            }
        })
        .collect()
}

struct SplitData {
    train: Dataset<f64>,
    cal: Dataset<f64>,
    test: Dataset<f64>,
    targets_all: Vec<f64>,
    seed: u64,
}

type Estimator = Box<dyn IntervalEstimator<f64>>;

struct Fitted {
    est: Estimator,
    tuned_dropout: Option<f64>,
}

/// Runs every split (in parallel) and every method; failures become rows.
pub fn run(cfg: &ExperimentConfig) -> Result<ResultsTable> {
    run_with_base(cfg, None)
}

/// As [`run`], resolving relative CSV paths against `base`.
pub fn run_with_base(cfg: &ExperimentConfig, base: Option<&Path>) -> Result<ResultsTable> {
    cfg.validate()?;
    let ds = cfg.data.load(base)?;
    run_on(cfg, &ds)
}

/// As [`run`] on an already loaded dataset (the config's data section is ignored).
pub fn run_on(cfg: &ExperimentConfig, ds: &Dataset<f64>) -> Result<ResultsTable> {
    cfg.validate()?;
    // Fail fast on infeasible fractions before spawning work.
    data::split_indices(ds.n(), cfg.base_seed, cfg.test_frac, cfg.cal_frac)?;
    let per_split: Vec<Vec<ResultRow>> = (0..cfg.n_splits)
        .into_par_iter()
        .map(|i| run_split(cfg, ds, i))
        .collect::<Result<_>>()?;
    let rows: Vec<ResultRow> = per_split.into_iter().flatten().collect();
    Ok(ResultsTable {
        aggregates: aggregate(&rows),
        rows,
    })
}

fn prepare_split(cfg: &ExperimentConfig, ds: &Dataset<f64>, i: usize) -> Result<SplitData> {
    let seed = cfg.base_seed.wrapping_add(i as u64);
    let triple = data::split(ds, seed, cfg.test_frac, cfg.cal_frac)?;
    if !cfg.unsafe_train_calibration {
        check_disjoint(&triple.train_idx, &triple.cal_idx)?;
    }
    let raw_train = ds.subset(&triple.train_idx)?;
    let scaler = ScalerParams::fit(&raw_train);
    let cal = if cfg.unsafe_train_calibration {
        scaler.transform(&raw_train)?
    } else if triple.cal_idx.is_empty() {
        Dataset::new(Vec::new(), Vec::new(), ds.d()).unwrap_or_else(|_| raw_train.clone())
    } else {
        scaler.transform(&ds.subset(&triple.cal_idx)?)?
    };
    Ok(SplitData {
        train: scaler.transform(&raw_train)?,
        cal,
        test: scaler.transform(&ds.subset(&triple.test_idx)?)?,
        targets_all: ds.targets().iter().map(|&y| scaler.transform_target(y)).collect(),
        seed,
    })
}

fn run_split(cfg: &ExperimentConfig, ds: &Dataset<f64>, i: usize) -> Result<Vec<ResultRow>> {
    let sd = prepare_split(cfg, ds, i)?;
    let has_cal = cfg.unsafe_train_calibration || cfg.cal_frac > 0.0;
    Ok(cfg
        .methods
        .iter()
        .enumerate()
        .map(|(m, spec)| {
            let start = Instant::now();
            let budget = Duration::from_secs_f64(cfg.time_budget_secs);
            let seed = rng::derive_seed(sd.seed, 1000 + m as u64);
            let outcome = if spec.conformal() && spec.name != "rf_oob_cp" && !has_cal {
                Err(Error::Config("conformal method needs a calibration set".into()))
            } else {
                fit_method(spec, &sd, cfg.alpha, seed, start + budget)
            };
            let elapsed = start.elapsed();
            let wall_ms = if cfg.record_timing { elapsed.as_millis() as u64 } else { 0 };
            let mut row = ResultRow {
                method: spec.name.clone(),
                split: i,
                metrics: None,
                wall_ms,
                status: Status::Error,
                tuned_dropout: None,
                message: None,
            };
            match outcome.and_then(|f| {
                MetricsReport::evaluate(&*f.est, &sd.test, &sd.targets_all).map(|m| (m, f.tuned_dropout))
            }) {
                Ok((metrics, tuned)) => {
                    row.status = if elapsed > budget {
                        Status::OoT
                    } else if metrics.r2.is_some_and(|r| r < -1.0) || metrics.relative_width > 100.0 {
                        Status::OoR
                    } else {
                        Status::Ok
                    };
                    row.metrics = Some(metrics);
                    row.tuned_dropout = tuned;
                }
                Err(Error::Timeout) => row.status = Status::OoT,
                Err(e) => row.message = Some(e.to_string()),
            }
            row
        })
        .collect())
}

/// Last `val_frac` of a seeded permutation of the training rows.
fn validation_split(train: &Dataset<f64>, frac: f64, seed: u64) -> Result<(Dataset<f64>, Option<Dataset<f64>>)> {
    let n_val = (train.n() as f64 * frac + 1e-9).floor() as usize;
    if n_val == 0 || n_val >= train.n() {
        return Ok((train.clone(), None));
    }
    let mut idx: Vec<usize> = (0..train.n()).collect();
    rng::shuffle(&mut rng::seeded(seed), &mut idx);
    let (fit, val) = idx.split_at(train.n() - n_val);
    Ok((train.subset(fit)?, Some(train.subset(val)?)))
}

fn train_config(spec: &MethodSpec, alpha: f64, seed: u64, deadline: Instant, has_val: bool) -> TrainConfig<f64> {
    let early_stopping = match (spec.early_stopping.as_str(), has_val) {
        ("loss", true) => EarlyStopping::Loss,
        ("interval", true) => EarlyStopping::Interval { alpha },
        _ => EarlyStopping::None,
    };
    TrainConfig {
        learning_rate: spec.learning_rate,
        epochs: spec.epochs,
        l2_lambda: spec.l2,
        early_stopping,
        patience: spec.patience,
        seed,
        deadline: Some(deadline),
        ..TrainConfig::default()
    }
}

fn train_net(
    spec: &MethodSpec,
    fit: &Dataset<f64>,
    val: Option<&Dataset<f64>>,
    loss: &LossKind<f64>,
    dropout: f64,
    tc: &TrainConfig<f64>,
) -> Result<NetParams<f64>> {
    let net = NetParams::init_for_loss(fit.d(), spec.hidden, loss, dropout, tc.seed)?;
    Ok(nn::train(&net, fit, val, tc, loss)?.net)
}

/// Mean Gaussian negative log-likelihood of the predictive `(μ, σ)` on `val`.
fn gaussian_score(est: &dyn Fn(&[f64]) -> (f64, f64), val: &Dataset<f64>) -> f64 {
    let total: f64 = val
        .rows()
        .zip(val.targets())
        .map(|(x, &y)| {
            let (mu, sigma) = est(x);
            let var = (sigma * sigma).max(1e-12);
            (y - mu).powi(2) / (2.0 * var) + 0.5 * var.ln()
        })
        .sum();
    total / val.n() as f64
}

fn forest_config(spec: &MethodSpec, seed: u64) -> ForestConfig {
    ForestConfig {
        n_trees: spec.n_trees,
        max_depth: spec.max_depth,
        min_leaf: spec.min_leaf,
        features_per_split: spec.features_per_split,
        seed,
    }
}

fn fit_method(spec: &MethodSpec, sd: &SplitData, alpha: f64, seed: u64, deadline: Instant) -> Result<Fitted> {
    let base = fit_base(spec, sd, alpha, seed, deadline)?;
    if !spec.conformal() {
        return Ok(base);
    }
    let Fitted { est, tuned_dropout } = base;
    let est: Arc<dyn IntervalEstimator<f64>> = Arc::from(est);
    let wrapped: Estimator = match spec.base() {
        "qr" | "qd" | "qrf" => Box::new(IntervalConformal::calibrate(est, &sd.cal, alpha)?),
        "drop" | "mve" | "de" | "gp" => Box::new(NormalizedConformal::calibrate(
            EstimatorPoint(est.clone()),
            EstimatorSpread(est),
            &sd.cal,
            alpha,
        )?),
        _ => Box::new(PointConformal::calibrate(EstimatorPoint(est), &sd.cal, alpha)?),
    };
    Ok(Fitted {
        est: wrapped,
        tuned_dropout,
    })
}

fn fit_base(spec: &MethodSpec, sd: &SplitData, alpha: f64, seed: u64, deadline: Instant) -> Result<Fitted> {
    let plain = |est: Estimator| Ok(Fitted { est, tuned_dropout: None });
    let train = &sd.train;
    match spec.name.as_str() {
        "ridge" | "ridge_cp" => {
            let model = Ridge::fit(train, spec.ridge_lambda)?;
            plain(Box::new(ConstantGaussianEstimator::from_residuals(model, train, alpha)?))
        }
        "rf_cp" | "rf_oob" | "rf_oob_cp" | "qrf" | "qrf_cp" => {
            let forest = Arc::new(Forest::fit(train, &forest_config(spec, seed), Some(deadline))?);
            match spec.name.as_str() {
                "rf_oob" => plain(Box::new(OobIntervalEstimator::new(forest, train, alpha)?)),
                "rf_oob_cp" => plain(Box::new(OobConformal::calibrate(forest, train, alpha)?)),
                "qrf" | "qrf_cp" => plain(Box::new(QrfEstimator::new(forest, alpha)?)),
                _ => plain(Box::new(ConstantGaussianEstimator::new(forest, 0.0, alpha)?)),
            }
        }
        "gp" | "gp_cp" => {
            let rows = spec.gp_fit_rows.min(train.n()).max(1);
            let mut idx: Vec<usize> = (0..train.n()).collect();
            rng::shuffle(&mut rng::seeded(seed), &mut idx);
            let hyper_ds = train.subset(&idx[..rows])?;
            let tuned = fit_gp_until(&hyper_ds, GpHyper::default(), spec.gp_iters, Some(deadline))?;
            if Instant::now() > deadline {
                return Err(Error::Timeout);
            }
            let gp = GpModel::new(train, tuned.hyper())?;
            plain(Box::new(crate::intervals::GpEstimator::new(gp, alpha)?))
        }
        _ => fit_network_method(spec, sd, alpha, seed, deadline),
    }
}

fn fit_network_method(spec: &MethodSpec, sd: &SplitData, alpha: f64, seed: u64, deadline: Instant) -> Result<Fitted> {
    let (fit, val) = validation_split(&sd.train, spec.val_frac, rng::derive_seed(seed, 1))?;
    let val = val.as_ref();
    let tc = train_config(spec, alpha, rng::derive_seed(seed, 2), deadline, val.is_some());
    let pass_seed = rng::derive_seed(seed, 3);
    let plain = |est: Estimator| Ok(Fitted { est, tuned_dropout: None });
    match spec.base() {
        "nn" => {
            let net = train_net(spec, &fit, val, &LossKind::Mse, 0.0, &tc)?;
            plain(Box::new(ConstantGaussianEstimator::new(net, 0.0, alpha)?))
        }
        "qr" => {
            let (lo, hi) = qr_levels(alpha, spec.softening)?;
            let net = train_net(spec, &fit, val, &LossKind::Pinball(vec![lo, hi]), 0.0, &tc)?;
            plain(Box::new(HeadIntervalEstimator::quantile(net, alpha)?))
        }
        "qd" => {
            let loss = LossKind::Qd {
                alpha,
                lambda: spec.qd_lambda,
                softness: spec.softness,
            };
            let net = train_net(spec, &fit, val, &loss, 0.0, &tc)?;
            plain(Box::new(HeadIntervalEstimator::qd(net, alpha)?))
        }
        "de" => {
            let ranges = fit.feature_ranges();
            let eta: Vec<f64> = ranges.iter().map(|r| r * spec.adversarial).collect();
            let nets = (0..spec.ensemble.max(1) as u64)
                .map(|k| {
                    let member = TrainConfig {
                        seed: rng::derive_seed(tc.seed, k),
                        adversarial_eta: (spec.adversarial > 0.0).then(|| eta.clone()),
                        ..tc.clone()
                    };
                    train_net(spec, &fit, val, &LossKind::GaussNll, 0.0, &member).map(Arc::new)
                })
                .collect::<Result<Vec<_>>>()?;
            plain(Box::new(DeepEnsembleEstimator::new(nets, alpha)?))
        }
        "drop" | "mve" => {
            let mve = spec.base() == "mve";
            let loss = if mve { LossKind::GaussNll } else { LossKind::Mse };
            let build = |p: f64| -> Result<Estimator> {
                let net = train_net(spec, &fit, val, &loss, p, &tc)?;
                Ok(if mve {
                    Box::new(MveEstimator::new(net, spec.passes, alpha, pass_seed)?)
                } else {
                    Box::new(DropoutEstimator::new(net, spec.passes, alpha, pass_seed)?)
                })
            };
            match (spec.dropout, val) {
                (Some(p), _) => plain(build(p)?),
                (None, None) => plain(build(0.1)?),
                (None, Some(val)) => {
                    let z = crate::intervals::z_score(alpha);
                    let mut best: Option<(f64, f64, Estimator)> = None;
                    for p in dropout_grid() {
                        let est = build(p)?;
                        let moments = |x: &[f64]| {
                            let i = est.interval(x);
                            ((i.lower + i.upper) / 2.0, i.width() / (2.0 * z))
                        };
                        let score = gaussian_score(&moments, val);
                        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
                            best = Some((score, p, est));
                        }
                    }
                    let (_, p, est) = best.expect("non-empty grid");
                    Ok(Fitted {
                        est,
                        tuned_dropout: Some(p),
                    })
                }
            }
        }
        other => Err(Error::Config(format!("unknown method {other:?}"))),
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

impl ResultsTable {
    pub fn rows_for<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a ResultRow> {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn aggregate_for(&self, method: &str) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.method == method)
    }

    /// Per-row CSV: method, split, coverage, mean_width, relative_width, r2,
    /// wall_ms, status, tuned_dropout.
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("method,split,coverage,mean_width,relative_width,r2,wall_ms,status,tuned_dropout\n");
        for r in &self.rows {
            let m = r.metrics.as_ref();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.method,
                r.split,
                fmt_opt(m.map(|m| m.coverage)),
                fmt_opt(m.map(|m| m.mean_width)),
                fmt_opt(m.map(|m| m.relative_width)),
                fmt_opt(m.and_then(|m| m.r2)),
                r.wall_ms,
                r.status.as_str(),
                fmt_opt(r.tuned_dropout),
            ));
        }
        out
    }

    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from(
            "method,n_rows,n_excluded,coverage_mean,coverage_std,mean_width_mean,mean_width_std,\
             relative_width_mean,relative_width_std,r2_mean,r2_std,wall_ms_mean,wall_ms_std\n",
        );
        let pair = |s: Option<Summary>| format!("{},{}", fmt_opt(s.map(|s| s.mean)), fmt_opt(s.map(|s| s.std)));
        for a in &self.aggregates {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                a.method,
                a.n_rows,
                a.n_excluded,
                pair(a.coverage),
                pair(a.mean_width),
                pair(a.relative_width),
                pair(a.r2),
                pair(a.wall_ms),
            ));
        }
        out
    }

    /// Writes `results.csv` and `aggregate.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let io = |path: PathBuf| move |source| Error::Io { path, source };
        std::fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
        for (name, body) in [("results.csv", self.rows_csv()), ("aggregate.csv", self.aggregate_csv())] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(io(path.clone()))?;
        }
        Ok(())
    }
}
