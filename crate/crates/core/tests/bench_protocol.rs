use predint::bench::{self, DataConfig, ExperimentConfig, MethodSpec, Status};
use predint::data::{SyntheticKind, SyntheticSpec};

fn config(methods: &[&str], n: usize, splits: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        DataConfig::synthetic(SyntheticSpec::new(SyntheticKind::LinearHomoscedastic, n, 3, 0.5), 2),
        methods.iter().map(|m| MethodSpec::named(m)).collect(),
    );
    cfg.n_splits = splits;
    cfg
}

#[test]
fn point_network_conformal_coverage_near_nominal() {
    let cfg = config(&["nn_cp"], 600, 50);
    let table = bench::run(&cfg).unwrap();
    let agg = table.aggregate_for("nn_cp").unwrap();
    assert_eq!(agg.n_excluded, 0);
    let c = agg.coverage.unwrap().mean;
    assert!((0.87..=0.93).contains(&c), "coverage {c}");
}

#[test]
fn aggregates_recompute_from_rows() {
    let table = bench::run(&config(&["ridge_cp", "rf_oob_cp"], 200, 5)).unwrap();
    for agg in &table.aggregates {
        let covs: Vec<f64> = table.rows_for(&agg.method).map(|r| r.metrics.as_ref().unwrap().coverage).collect();
        let mean = covs.iter().sum::<f64>() / covs.len() as f64;
        let std = (covs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / covs.len() as f64).sqrt();
        let s = agg.coverage.unwrap();
        assert_eq!((s.mean, s.std), (mean, std));
        assert_eq!(agg.n_rows, 5);
    }
}

#[test]
fn every_method_runs() {
    let names: Vec<&str> = bench::METHODS.iter().map(|(n, _)| *n).collect();
    let mut cfg = config(&names, 150, 1);
    for m in &mut cfg.methods {
        m.epochs = 5;
        m.passes = 5;
        m.ensemble = 2;
        m.n_trees = 10;
        m.gp_iters = 3;
        m.dropout = Some(0.1);
    }
    let table = bench::run(&cfg).unwrap();
    for row in &table.rows {
        assert!(matches!(row.status, Status::Ok | Status::OoR), "{}: {:?}", row.method, row.message);
    }
}

#[test]
fn tiny_time_budget_marks_out_of_time() {
    let mut cfg = config(&["gp", "ridge"], 400, 1);
    cfg.time_budget_secs = 1e-9;
    let table = bench::run(&cfg).unwrap();
    assert!(table.rows.iter().all(|r| r.status == Status::OoT));
    assert_eq!(table.aggregate_for("gp").unwrap().n_excluded, 1);
}

#[test]
fn dropout_tuning_is_recorded() {
    let mut cfg = config(&["drop"], 300, 1);
    cfg.methods[0].epochs = 10;
    cfg.methods[0].passes = 10;
    let table = bench::run(&cfg).unwrap();
    let p = table.rows[0].tuned_dropout.unwrap();
    assert!(bench::dropout_grid().contains(&p));
}
