//! Datasets: CSV ingestion, standardization, seeded splits and synthetic
//! generators.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Real;

/// Design matrix (row-major, `n × d`) plus response vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    features: Vec<T>,
    targets: Vec<T>,
    n_features: usize,
    column_names: Vec<String>,
    target_name: String,
}

impl<T: Real> Dataset<T> {
    /// Builds a dataset, checking shapes and finiteness. Column names default
    /// to `x1..xd` / `y` when `column_names` is empty.
    pub fn new(features: Vec<T>, targets: Vec<T>, n_features: usize) -> Result<Self> {
        Self::with_names(features, targets, n_features, Vec::new(), "y".to_string())
    }

    pub fn with_names(
        features: Vec<T>,
        targets: Vec<T>,
        n_features: usize,
        mut column_names: Vec<String>,
        target_name: String,
    ) -> Result<Self> {
        let n = targets.len();
        if n == 0 {
            return Err(Error::InvalidData("dataset has no rows".into()));
        }
        if features.len() != n * n_features {
            return Err(Error::InvalidData(format!(
                "feature matrix has {} entries, expected {n} rows × {n_features} columns",
                features.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite feature at row {}, column {}",
                pos / n_features.max(1),
                pos % n_features.max(1)
            )));
        }
        if let Some(pos) = targets.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite target at row {pos}")));
        }
        if column_names.is_empty() {
            column_names = (1..=n_features).map(|j| format!("x{j}")).collect();
        } else if column_names.len() != n_features {
            return Err(Error::Dimension {
                expected: n_features,
                got: column_names.len(),
            });
        }
        Ok(Self {
            features,
            targets,
            n_features,
            column_names,
            target_name,
        })
    }

    pub fn n(&self) -> usize {
        self.targets.len()
    }

    pub fn d(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> + '_ {
        (0..self.n()).map(move |i| self.row(i))
    }

    pub fn target(&self, i: usize) -> T {
        self.targets[i]
    }

    pub fn targets(&self) -> &[T] {
        &self.targets
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = T> + '_ {
        self.rows().map(move |r| r[j])
    }

    /// Rows selected by `idx`, in that order. Panics on out-of-range indices.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(idx.len() * self.n_features);
        for &i in idx {
            features.extend_from_slice(self.row(i));
        }
        let targets = idx.iter().map(|&i| self.targets[i]).collect();
        Self::with_names(
            features,
            targets,
            self.n_features,
            self.column_names.clone(),
            self.target_name.clone(),
        )
    }

    /// Same features with a replaced response vector.
    pub fn with_targets(&self, targets: Vec<T>) -> Result<Self> {
        Self::with_names(
            self.features.clone(),
            targets,
            self.n_features,
            self.column_names.clone(),
            self.target_name.clone(),
        )
    }

    /// Per-feature `max − min`.
    pub fn feature_ranges(&self) -> Vec<T> {
        (0..self.n_features)
            .map(|j| {
                let (lo, hi) = self
                    .column(j)
                    .fold((T::infinity(), T::neg_infinity()), |(lo, hi), v| (lo.min(v), hi.max(v)));
                hi - lo
            })
            .collect()
    }

    /// Applies `ln` to the response. Opt-in only; never done automatically.
    pub fn log_targets(&self) -> Result<Self> {
        if self.targets.iter().any(|&y| y <= T::zero()) {
            return Err(Error::InvalidArgument("log transform needs positive targets".into()));
        }
        self.with_targets(self.targets.iter().map(|y| y.ln()).collect())
    }
}

/// Which CSV column holds the response.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TargetColumn {
    Name(String),
    Index(usize),
}

impl From<&str> for TargetColumn {
    fn from(s: &str) -> Self {
        TargetColumn::Name(s.to_string())
    }
}

impl From<usize> for TargetColumn {
    fn from(i: usize) -> Self {
        TargetColumn::Index(i)
    }
}

/// Reads a headed, comma-separated numeric file. Row numbers in errors are
/// 1-based file lines (the header is line 1).
pub fn load_csv<T: Real>(path: impl AsRef<Path>, target: impl Into<TargetColumn>) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let target = target.into();
    let t = match &target {
        TargetColumn::Name(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingTarget(name.clone()))?,
        TargetColumn::Index(i) if *i < header.len() => *i,
        TargetColumn::Index(i) => return Err(Error::MissingTarget(format!("#{i}"))),
    };
    let d = header.len() - 1;
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            let value: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row: line,
                column: header[j].clone(),
                value: cell.to_string(),
            })?;
            if j == t {
                targets.push(T::lit(value));
            } else {
                features.push(T::lit(value));
            }
        }
    }
    let names = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != t)
        .map(|(_, h)| h.clone())
        .collect();
    Dataset::with_names(features, targets, d, names, header[t].clone())
}

/// Writes `x1..xd,y` with shortest round-trip float formatting.
pub fn write_csv<T: Real>(ds: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<&str> = ds.column_names().iter().map(String::as_str).collect();
    header.push(ds.target_name());
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = ds.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(ds.target(i).to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.as_ref().to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Column means and population standard deviations; the last entry belongs
/// to the target.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalerParams<T> {
    pub means: Vec<T>,
    pub stds: Vec<T>,
}

impl<T: Real> ScalerParams<T> {
    pub fn fit(ds: &Dataset<T>) -> Self {
        let d = ds.d();
        let mut means = Vec::with_capacity(d + 1);
        let mut stds = Vec::with_capacity(d + 1);
        let mut push = |col: Vec<T>| {
            let (m, s) = crate::scalar::mean_std(&col);
            means.push(m);
            stds.push(if s > T::zero() { s } else { T::one() });
        };
        for j in 0..d {
            push(ds.column(j).collect());
        }
        push(ds.targets().to_vec());
        Self { means, stds }
    }

    pub fn transform(&self, ds: &Dataset<T>) -> Result<Dataset<T>> {
        let d = ds.d();
        if d + 1 != self.means.len() {
            return Err(Error::Dimension {
                expected: self.means.len() - 1,
                got: d,
            });
        }
        let features = ds
            .features()
            .iter()
            .enumerate()
            .map(|(k, &v)| (v - self.means[k % d.max(1)]) / self.stds[k % d.max(1)])
            .collect();
        let targets = ds.targets().iter().map(|&y| self.transform_target(y)).collect();
        Dataset::with_names(
            features,
            targets,
            d,
            ds.column_names().to_vec(),
            ds.target_name().to_string(),
        )
    }

    pub fn inverse(&self, ds: &Dataset<T>) -> Result<Dataset<T>> {
        let d = ds.d();
        if d + 1 != self.means.len() {
            return Err(Error::Dimension {
                expected: self.means.len() - 1,
                got: d,
            });
        }
        let features = ds
            .features()
            .iter()
            .enumerate()
            .map(|(k, &v)| v * self.stds[k % d.max(1)] + self.means[k % d.max(1)])
            .collect();
        let targets = ds.targets().iter().map(|&y| self.inverse_target(y)).collect();
        Dataset::with_names(
            features,
            targets,
            d,
            ds.column_names().to_vec(),
            ds.target_name().to_string(),
        )
    }

    pub fn transform_target(&self, y: T) -> T {
        let k = self.means.len() - 1;
        (y - self.means[k]) / self.stds[k]
    }

    pub fn inverse_target(&self, y: T) -> T {
        let k = self.means.len() - 1;
        y * self.stds[k] + self.means[k]
    }
}

/// Fits a scaler on `ds` and returns the standardized copy.
pub fn standardize<T: Real>(ds: &Dataset<T>) -> Result<(Dataset<T>, ScalerParams<T>)> {
    let params = ScalerParams::fit(ds);
    Ok((params.transform(ds)?, params))
}

/// Disjoint proper-train / calibration / test index sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitTriple {
    pub train_idx: Vec<usize>,
    pub cal_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub seed: u64,
}

impl SplitTriple {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train_idx.len(), self.cal_idx.len(), self.test_idx.len())
    }
}

// floor with a little slack so that e.g. 0.29 * 100 floors to 29
fn floor_count(x: f64) -> usize {
    (x + 1e-9).floor().max(0.0) as usize
}

/// Seeded shuffle of `0..n` sliced into test (first `floor(n·test_frac)`),
/// calibration (next `floor((n − test)·cal_frac)`) and proper-train (rest).
pub fn split_indices(n: usize, seed: u64, test_frac: f64, cal_frac: f64) -> Result<SplitTriple> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::InvalidArgument(format!("test_frac {test_frac} outside (0, 1)")));
    }
    if !(0.0..1.0).contains(&cal_frac) {
        return Err(Error::InvalidArgument(format!("cal_frac {cal_frac} outside [0, 1)")));
    }
    let n_test = floor_count(n as f64 * test_frac);
    let n_cal = floor_count((n - n_test) as f64 * cal_frac);
    if n_test == 0 {
        return Err(Error::InvalidArgument(format!("test_frac {test_frac} leaves no test rows for n={n}")));
    }
    if cal_frac > 0.0 && n_cal == 0 {
        return Err(Error::InvalidArgument(format!("cal_frac {cal_frac} leaves no calibration rows")));
    }
    if n_test + n_cal >= n {
        return Err(Error::InvalidArgument("split leaves no training rows".into()));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::seeded(seed), &mut perm);
    let test_idx = perm[..n_test].to_vec();
    let cal_idx = perm[n_test..n_test + n_cal].to_vec();
    let train_idx = perm[n_test + n_cal..].to_vec();
    Ok(SplitTriple {
        train_idx,
        cal_idx,
        test_idx,
        seed,
    })
}

pub fn split<T: Real>(ds: &Dataset<T>, seed: u64, test_frac: f64, cal_frac: f64) -> Result<SplitTriple> {
    split_indices(ds.n(), seed, test_frac, cal_frac)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    LinearHomoscedastic,
    SineHeteroscedastic,
    LognormalSkewed,
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear_homoscedastic" => Ok(Self::LinearHomoscedastic),
            "sine_heteroscedastic" => Ok(Self::SineHeteroscedastic),
            "lognormal_skewed" => Ok(Self::LognormalSkewed),
            other => Err(Error::InvalidArgument(format!("unknown synthetic kind {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    pub d: usize,
    pub noise_scale: f64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, n: usize, d: usize, noise_scale: f64) -> Self {
        Self { kind, n, d, noise_scale }
    }

    /// Coefficients of the linear kinds, drawn from `N(0, 1)` on a stream
    /// derived from `seed`.
    pub fn coefficients(&self, seed: u64) -> Vec<f64> {
        let mut rng = rng::seeded(rng::derive_seed(seed, 0));
        (0..self.d).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    /// Conditional noise standard deviation of the sine kind at `x1`.
    pub fn sine_noise_std(&self, x1: f64) -> f64 {
        self.noise_scale * (1.0 + x1.abs())
    }
}

/// Features are i.i.d. `U(−1, 1)`; responses follow `spec.kind`:
///
/// - linear: `y = xᵀβ + ε`, `ε ~ N(0, s²)`
/// - sine: `y = sin(2π x₁) + s·(1 + |x₁|)·ε`, `ε ~ N(0, 1)`
/// - lognormal: `y = xᵀβ + exp(ε) − exp(s²/2)`, `ε ~ N(0, s²)`
pub fn gen_synthetic<T: Real>(spec: &SyntheticSpec, seed: u64) -> Result<Dataset<T>> {
    if spec.n == 0 || spec.d == 0 {
        return Err(Error::InvalidArgument("synthetic data needs n ≥ 1 and d ≥ 1".into()));
    }
    if !(spec.noise_scale >= 0.0) || !spec.noise_scale.is_finite() {
        return Err(Error::InvalidArgument("noise_scale must be finite and non-negative".into()));
    }
    let beta = spec.coefficients(seed);
    let mut rng = rng::seeded(rng::derive_seed(seed, 1));
    let s = spec.noise_scale;
    let mut features = Vec::with_capacity(spec.n * spec.d);
    let mut targets = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let x: Vec<f64> = (0..spec.d).map(|_| 2.0 * rng::unit_f64(&mut rng) - 1.0).collect();
        let eps: f64 = StandardNormal.sample(&mut rng);
        let linear = || x.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
        let y = match spec.kind {
            SyntheticKind::LinearHomoscedastic => linear() + s * eps,
            SyntheticKind::SineHeteroscedastic => {
                (2.0 * std::f64::consts::PI * x[0]).sin() + spec.sine_noise_std(x[0]) * eps
            }
            SyntheticKind::LognormalSkewed => linear() + (s * eps).exp() - (0.5 * s * s).exp(),
        };
        features.extend(x.into_iter().map(T::lit));
        targets.push(T::lit(y));
    }
    Dataset::new(features, targets, spec.d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn csv_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_named_target() {
        let f = csv_file("a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let ds: Dataset<f64> = load_csv(f.path(), "y").unwrap();
        assert_eq!((ds.n(), ds.d()), (3, 2));
        assert_eq!(ds.row(1), &[4.0, 5.0]);
        assert_eq!(ds.targets(), &[3.0, 6.0, 9.0]);
        assert_eq!(ds.column_names(), &["a", "b"]);
    }

    #[test]
    fn reports_non_numeric_cell() {
        let f = csv_file("a,b,y\n1,abc,3\n");
        let err = load_csv::<f64>(f.path(), "y").unwrap_err();
        match err {
            Error::NonNumeric { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn target_by_index_and_missing_target() {
        let f = csv_file("t,x\n1,2\n3,4\n");
        let ds: Dataset<f64> = load_csv(f.path(), 0usize).unwrap();
        assert_eq!(ds.d(), 1);
        assert_eq!(ds.targets(), &[1.0, 3.0]);
        assert!(matches!(load_csv::<f64>(f.path(), "zz"), Err(Error::MissingTarget(_))));
        assert!(matches!(
            load_csv::<f64>("/nonexistent/file.csv", "y"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn standardizes_with_population_std() {
        let ds = Dataset::new(vec![5.0, 5.0, 5.0], vec![1.0, 2.0, 3.0], 1).unwrap();
        let (z, params) = standardize(&ds).unwrap();
        let s = (2.0f64 / 3.0).sqrt();
        for (got, want) in z.targets().iter().zip([-1.0 / s, 0.0, 1.0 / s]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((z.targets()[0] + 1.224_744_871).abs() < 1e-9);
        assert_eq!(z.features(), &[0.0, 0.0, 0.0]);
        assert_eq!(params.stds[0], 1.0);
        let back = params.inverse(&z).unwrap();
        for (a, b) in back.targets().iter().zip(ds.targets()) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn split_sizes() {
        let s = split_indices(100, 3, 0.2, 0.5).unwrap();
        assert_eq!(s.sizes(), (40, 40, 20));
        let s = split_indices(100, 3, 0.2, 0.0).unwrap();
        assert_eq!(s.sizes(), (80, 0, 20));
        assert_eq!(split_indices(100, 3, 0.2, 0.5).unwrap(), split_indices(100, 3, 0.2, 0.5).unwrap());
        assert!(split_indices(100, 3, 0.0, 0.5).is_err());
        assert!(split_indices(100, 3, 0.2, 1.0).is_err());
        assert!(split_indices(3, 3, 0.2, 0.5).is_err());
    }

    #[test]
    fn noiseless_linear_has_zero_least_squares_residuals() {
        let spec = SyntheticSpec::new(SyntheticKind::LinearHomoscedastic, 50, 3, 0.0);
        let ds: Dataset<f64> = gen_synthetic(&spec, 11).unwrap();
        let model = crate::linear::Ridge::fit(&ds, 0.0).unwrap();
        for i in 0..ds.n() {
            assert!((model.predict_row(ds.row(i)) - ds.target(i)).abs() < 1e-9);
        }
    }

    #[test]
    fn lognormal_residuals_are_skewed() {
        let spec = SyntheticSpec::new(SyntheticKind::LognormalSkewed, 100_000, 2, 0.5);
        let ds: Dataset<f64> = gen_synthetic(&spec, 5).unwrap();
        let beta = spec.coefficients(5);
        let r: Vec<f64> = (0..ds.n())
            .map(|i| ds.target(i) - ds.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let (m, s) = crate::scalar::mean_std(&r);
        let skew = r.iter().map(|v| ((v - m) / s).powi(3)).sum::<f64>() / r.len() as f64;
        // lognormal skewness (e^{s²} + 2)·sqrt(e^{s²} − 1) ≈ 1.75 at s = 0.5
        assert!(skew > 1.0, "skewness {skew}");
        assert!(m.abs() < 0.01);
    }

    #[test]
    fn synthetic_is_deterministic_and_validated() {
        let spec = SyntheticSpec::new(SyntheticKind::SineHeteroscedastic, 30, 2, 0.3);
        let a: Dataset<f64> = gen_synthetic(&spec, 1).unwrap();
        let b: Dataset<f64> = gen_synthetic(&spec, 1).unwrap();
        assert_eq!(a, b);
        assert!(gen_synthetic::<f64>(&SyntheticSpec::new(SyntheticKind::LinearHomoscedastic, 0, 2, 1.0), 1).is_err());
        assert!(gen_synthetic::<f64>(&SyntheticSpec::new(SyntheticKind::LinearHomoscedastic, 5, 0, 1.0), 1).is_err());
    }

    #[test]
    fn rejects_invalid_datasets() {
        assert!(Dataset::<f64>::new(vec![], vec![], 1).is_err());
        assert!(Dataset::new(vec![1.0, f64::NAN], vec![1.0, 2.0], 1).is_err());
        assert!(Dataset::new(vec![1.0], vec![1.0, 2.0], 1).is_err());
    }
}
