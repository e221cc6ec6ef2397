use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_predint"))
}

#[test]
fn list_methods_names_every_method() {
    let out = bin().arg("list-methods").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for (name, _) in predint::bench::METHODS {
        assert!(text.lines().any(|l| l.split_whitespace().next() == Some(name)), "{name}");
    }
}

#[test]
fn synth_writes_loadable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let status = bin()
        .args(["synth", "--kind", "lognormal_skewed", "--n", "50", "--d", "3", "--seed", "4", "--out"])
        .arg(&path)
        .status()
        .unwrap();
    assert!(status.success());
    let ds = predint::data::load_csv::<f64>(&path, "y").unwrap();
    assert_eq!((ds.n(), ds.d()), (50, 3));
    let direct = predint::data::gen_synthetic::<f64>(
        &predint::data::SyntheticSpec::new(predint::data::SyntheticKind::LognormalSkewed, 50, 3, 0.3),
        4,
    )
    .unwrap();
    for (a, b) in ds.targets().iter().zip(direct.targets()) {
        assert_eq!(a, b);
    }
}

#[test]
fn run_is_bit_stable_and_reads_relative_csv() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["synth", "--kind", "linear_homoscedastic", "--n", "120", "--d", "2", "--seed", "1", "--out"])
        .arg(dir.path().join("data.csv"))
        .status()
        .unwrap();
    assert!(status.success());
    let config = dir.path().join("exp.toml");
    std::fs::write(
        &config,
        r#"
version = 1
n_splits = 3
[data]
csv = "data.csv"
target = "y"
[[methods]]
name = "ridge_cp"
[[methods]]
name = "rf_oob"
n_trees = 20
"#,
    )
    .unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out_dir = dir.path().join(format!("out{k}"));
        let status = bin().arg("run").arg("--config").arg(&config).arg("--out-dir").arg(&out_dir).status().unwrap();
        assert!(status.success());
        outputs.push((
            std::fs::read(out_dir.join("results.csv")).unwrap(),
            std::fs::read(out_dir.join("aggregate.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let rows = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert!(rows.starts_with("method,split,coverage,mean_width,relative_width,r2,wall_ms,status"));
    assert_eq!(rows.lines().count(), 1 + 2 * 3);
    assert!(rows.lines().skip(1).all(|l| l.contains(",ok,")));
}

#[test]
fn run_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "version = 9\nmethods = []\n[data]\nseed = 0\n").unwrap();
    let out = bin().arg("run").arg("--config").arg(&config).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}
