use predint::conformal::{conformalize_interval, conformalize_normalized, conformalize_point};
use predint::data::{self, split_indices, Dataset, ScalerParams};
use predint::forest::{Forest, ForestConfig};
use predint::gp::{GpHyper, GpModel};
use predint::intervals::{
    ConstantGaussianEstimator, DeepEnsembleEstimator, DropoutEstimator, FnPredictor, GpEstimator,
    HeadIntervalEstimator, Interval, IntervalEstimator, MveEstimator, OobIntervalEstimator, QrfEstimator,
};
use predint::metrics::{coverage, mean_width, r2};
use predint::nn::NetParams;
use proptest::prelude::*;
use std::sync::Arc;

fn dataset(n: usize, d: usize) -> impl Strategy<Value = Dataset<f64>> {
    (
        proptest::collection::vec(-50.0..50.0f64, n * d),
        proptest::collection::vec(-50.0..50.0f64, n),
    )
        .prop_map(move |(x, y)| Dataset::new(x, y, d).unwrap())
}

proptest! {
    #[test]
    fn split_is_a_partition(n in 2usize..500, seed in any::<u64>(), test in 0.05f64..0.5, cal in 0.0f64..0.9) {
        if let Ok(t) = split_indices(n, seed, test, cal) {
            let mut all: Vec<usize> = t.train_idx.iter().chain(&t.cal_idx).chain(&t.test_idx).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(t.test_idx.len(), (n as f64 * test + 1e-9).floor() as usize);
            prop_assert_eq!(t.cal_idx.len(), ((n - t.test_idx.len()) as f64 * cal + 1e-9).floor() as usize);
            prop_assert!(!t.train_idx.is_empty());
        }
    }

    #[test]
    fn standardization_idempotent_and_invertible(ds in (2usize..40, 1usize..4).prop_flat_map(|(n, d)| dataset(n, d))) {
        let (once, scaler) = data::standardize(&ds).unwrap();
        let (twice, _) = data::standardize(&once).unwrap();
        for (a, b) in once.features().iter().zip(twice.features()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in once.targets().iter().zip(twice.targets()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        let back = scaler.inverse(&once).unwrap();
        for (a, b) in back.features().iter().zip(ds.features()) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        for (a, b) in back.targets().iter().zip(ds.targets()) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let refit = ScalerParams::fit(&ds);
        prop_assert_eq!(refit, scaler);
    }

    #[test]
    fn conformal_intervals_nest_in_alpha(
        ys in proptest::collection::vec(-5.0..5.0f64, 20..200),
        a1 in 0.01f64..0.5,
        gap in 0.001f64..0.4,
        x in -2.0..2.0f64,
    ) {
        let a2 = (a1 + gap).min(0.99);
        let n = ys.len();
        let xs: Vec<f64> = (0..n).map(|k| k as f64 / n as f64).collect();
        let cal = Dataset::new(xs, ys, 1).unwrap();
        let model = FnPredictor(|x: &[f64]| 0.3 * x[0]);
        let disp = FnPredictor(|x: &[f64]| 1.0 + x[0].abs());
        let band = ConstantGaussianEstimator::new(FnPredictor(|x: &[f64]| x[0]), 0.5, 0.1).unwrap();
        let pairs = [
            (conformalize_point(&model, &cal, a1).unwrap().interval(&[x]), conformalize_point(&model, &cal, a2).unwrap().interval(&[x])),
            (conformalize_normalized(&model, &disp, &cal, a1).unwrap().interval(&[x]), conformalize_normalized(&model, &disp, &cal, a2).unwrap().interval(&[x])),
            (conformalize_interval(&band, &cal, a1).unwrap().interval(&[x]), conformalize_interval(&band, &cal, a2).unwrap().interval(&[x])),
        ];
        for (wide, narrow) in pairs {
            prop_assert!(wide.contains_interval(&narrow), "{:?} vs {:?}", wide, narrow);
        }
    }

    #[test]
    fn coverage_and_miss_rate_sum_to_one(
        rows in proptest::collection::vec((-3.0..3.0f64, 0.0..2.0f64, -4.0..4.0f64), 1..100),
    ) {
        let ints: Vec<Interval<f64>> = rows.iter().map(|&(c, h, _)| Interval { lower: c - h, upper: c + h }).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let cov = coverage(&ints, &ys).unwrap();
        let miss = ints.iter().zip(&ys).filter(|(i, &y)| !i.contains(y)).count() as f64 / ys.len() as f64;
        prop_assert_eq!(cov + miss, 1.0);
        let shift = 7.25;
        let moved: Vec<Interval<f64>> = ints.iter().map(|i| Interval { lower: i.lower + shift, upper: i.upper + shift }).collect();
        prop_assert!((mean_width(&moved).unwrap() - mean_width(&ints).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn r2_affine_invariant(
        pairs in proptest::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 3..60),
        scale in 0.1f64..10.0,
        offset in -5.0..5.0f64,
    ) {
        let p: Vec<f64> = pairs.iter().map(|r| r.0).collect();
        let y: Vec<f64> = pairs.iter().map(|r| r.1).collect();
        if let Ok(base) = r2(&p, &y) {
            let p2: Vec<f64> = p.iter().map(|v| scale * v + offset).collect();
            let y2: Vec<f64> = y.iter().map(|v| scale * v + offset).collect();
            prop_assert!((r2(&p2, &y2).unwrap() - base).abs() < 1e-9 * base.abs().max(1.0));
        }
    }
}

#[test]
fn every_estimator_orders_its_bounds() {
    let ds = predint::data::gen_synthetic::<f64>(
        &predint::data::SyntheticSpec::new(predint::data::SyntheticKind::SineHeteroscedastic, 200, 2, 0.3),
        3,
    )
    .unwrap();
    let forest = Arc::new(
        Forest::fit(&ds, &ForestConfig { n_trees: 10, seed: 3, ..ForestConfig::default() }, None).unwrap(),
    );
    let two_head = |seed| Arc::new(NetParams::init(2, 16, 2, 0.2, seed).unwrap());
    let estimators: Vec<Box<dyn IntervalEstimator<f64>>> = vec![
        Box::new(DropoutEstimator::new(NetParams::init(2, 16, 1, 0.2, 1).unwrap(), 10, 0.1, 1).unwrap()),
        Box::new(MveEstimator::new(two_head(2), 10, 0.1, 2).unwrap()),
        Box::new(DeepEnsembleEstimator::new(vec![two_head(3), two_head(4)], 0.1).unwrap()),
        Box::new(OobIntervalEstimator::new(forest.clone(), &ds, 0.1).unwrap()),
        Box::new(QrfEstimator::new(forest.clone(), 0.1).unwrap()),
        Box::new(HeadIntervalEstimator::quantile(two_head(5), 0.1).unwrap()),
        Box::new(HeadIntervalEstimator::qd(two_head(6), 0.1).unwrap()),
        Box::new(GpEstimator::new(GpModel::new(&ds, GpHyper::default()).unwrap(), 0.1).unwrap()),
    ];
    let mut r = predint::rng::seeded(4);
    for _ in 0..10_000 {
        let x = [
            predint::rng::unit_f64(&mut r) * 6.0 - 3.0,
            predint::rng::unit_f64(&mut r) * 6.0 - 3.0,
        ];
        for e in &estimators {
            let i = e.interval(&x);
            assert!(i.lower <= i.upper, "{} at {x:?}: {i:?}", e.method());
        }
    }
}
