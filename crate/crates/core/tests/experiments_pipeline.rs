use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use healsim_core::calibration::CalibrationConfig;
use healsim_core::experiments::{
    self as exp, gen_synthetic, parse_json, ExperimentConfig, ExperimentError, Method, SweepSpec,
    Table,
};
use healsim_core::fault_model::ScenarioClass;
use proptest::prelude::*;

fn small_spec() -> SweepSpec {
    parse_json(
        r#"{"n_nodes": 40, "epochs": 200, "bootstrap_epochs": 30, "seed": 12,
            "fault_scales": [0.2, 0.5], "profiles": ["P1", "P2", "P3"],
            "thresholds": [100, 400, 800]}"#,
    )
    .unwrap()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

#[test]
fn sweep_output_is_independent_of_worker_count() {
    let spec = small_spec();
    let data = gen_synthetic(spec.n_nodes, 12);
    let one = tempfile::tempdir().unwrap();
    let three = tempfile::tempdir().unwrap();
    exp::write_sweep(one.path(), &exp::run_sweep(&spec, &data, Some(1)).unwrap()).unwrap();
    exp::write_sweep(
        three.path(),
        &exp::run_sweep(&spec, &data, Some(3)).unwrap(),
    )
    .unwrap();
    let (a, b) = (files(one.path()), files(three.path()));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (name, bytes) in &a {
        assert!(bytes == &b[name], "{name} differs between worker counts");
    }
    assert_eq!(a.len(), 6);
}

#[test]
fn sweep_rows_follow_spec_order() {
    let spec = small_spec();
    let r = exp::run_sweep(&spec, &gen_synthetic(40, 12), Some(2)).unwrap();
    let keys: Vec<&str> = r.settings.iter().map(|s| s.key.as_str()).collect();
    assert_eq!(keys.len(), spec.setting_count());
    assert_eq!(
        &keys[..4],
        [
            "P1-s0.20-t100",
            "P1-s0.20-t400",
            "P1-s0.20-t800",
            "P1-s0.50-t100"
        ]
    );
    assert!(r.failures.is_empty());
    for s in &r.settings {
        assert_eq!(s.pairs, 40 * 39);
        assert_eq!(s.features.len(), healsim_core::calibration::FEATURE_COUNT);
        assert!(s.app_error.is_finite() && s.app_error >= 0.0);
    }
}

#[test]
fn calibrators_round_trip_through_files() {
    let spec = small_spec();
    let dir = tempfile::tempdir().unwrap();
    exp::write_sweep(
        dir.path(),
        &exp::run_sweep(&spec, &gen_synthetic(40, 12), None).unwrap(),
    )
    .unwrap();
    let feats = exp::read_features(&dir.path().join("features.csv")).unwrap();
    let costs = exp::read_stream_costs(&dir.path().join("stream_costs.csv")).unwrap();
    let targets = exp::read_targets(&dir.path().join("targets.csv")).unwrap();
    let cfg = CalibrationConfig::default();
    for method in [
        Method::None,
        Method::FnLambda,
        Method::Ols,
        Method::ElasticNet,
    ] {
        let train: Vec<String> = if method == Method::ElasticNet {
            vec!["P1".into(), "P2".into()]
        } else {
            Vec::new()
        };
        let (model, report) =
            exp::calibrate(method, Some(&feats), Some(&costs), &targets, &cfg, &train).unwrap();
        assert_eq!(report.rows.len(), targets.len());
        assert!(report.rmse.is_finite());

        let path = dir.path().join(format!("{}.json", method.as_str()));
        exp::write_json(&path, &model).unwrap();
        let back: exp::CalibrationModel = parse_json(&fs::read_to_string(&path).unwrap()).unwrap();
        let again = exp::predict(&back, Some(&feats), Some(&costs)).unwrap();
        for (a, b) in again.iter().zip(&report.rows) {
            assert_eq!(a.setting_key, b.setting_key);
            assert_eq!(
                a.predicted,
                b.predicted,
                "{} on {}",
                method.as_str(),
                a.setting_key
            );
        }
        if method == Method::ElasticNet {
            assert!(report.accuracy_loss.is_some());
            assert!(!report.generalization.is_empty());
        }
    }
}

#[test]
fn mismatched_setting_keys_are_data_errors() {
    let spec = small_spec();
    let r = exp::run_sweep(&spec, &gen_synthetic(40, 12), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    exp::write_sweep(dir.path(), &r).unwrap();
    let feats = exp::read_features(&dir.path().join("features.csv")).unwrap();
    let mut targets = exp::read_targets(&dir.path().join("targets.csv")).unwrap();
    targets.remove("P2-s0.50-t400");
    let err = exp::calibrate(
        Method::Ols,
        Some(&feats),
        None,
        &targets,
        &CalibrationConfig::default(),
        &[],
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("P2-s0.50-t400"), "{err}");
}

#[test]
fn bad_configs_name_the_offending_key() {
    let unknown = parse_json::<ExperimentConfig>(
        r#"{"n_nodes": 40, "epochs": 200, "bootstrap_epochs": 30, "seed": 1, "profile": "P1",
            "fault_scale": 0.5, "thresholds": [100], "colour": 3}"#,
    )
    .unwrap_err();
    assert_eq!(unknown.exit_code(), 2);
    assert!(unknown.to_string().contains("colour"));

    let cfg: ExperimentConfig = parse_json(
        r#"{"n_nodes": 300, "epochs": 800, "bootstrap_epochs": 100, "seed": 1, "profile": "P3",
            "fault_scale": 0.5, "thresholds": [100]}"#,
    )
    .unwrap();
    let err = exp::profile(&cfg, false).unwrap_err();
    assert!(matches!(err, ExperimentError::Config(_)), "{err}");

    let cfg: ExperimentConfig = parse_json(
        r#"{"n_nodes": 40, "epochs": 200, "bootstrap_epochs": 30, "seed": 1, "profile": "P1",
            "fault_scale": 0.5, "thresholds": [4000]}"#,
    )
    .unwrap();
    let err = cfg.validate().unwrap_err();
    assert!(err.to_string().contains("thresholds"), "{err}");
}

#[test]
fn class_frequencies_sum_to_one() {
    let cfg: ExperimentConfig = parse_json(
        r#"{"n_nodes": 40, "epochs": 200, "bootstrap_epochs": 30, "seed": 2, "profile": "P2",
            "fault_scale": 0.5, "thresholds": [100, 800]}"#,
    )
    .unwrap();
    let r = exp::profile(&cfg, true).unwrap();
    let dir = tempfile::tempdir().unwrap();
    exp::write_profile(dir.path(), &r).unwrap();
    let t = exp::read_table(&dir.path().join("frequencies.csv")).unwrap();
    let (th, state, freq) = (
        t.column("threshold").unwrap(),
        t.column("state").unwrap(),
        t.column("rel_freq").unwrap(),
    );
    for threshold in ["100", "800"] {
        let total: f64 = t
            .rows
            .iter()
            .filter(|row| row[th] == threshold && row[state] == "ALL")
            .map(|row| row[freq].parse::<f64>().unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-12, "t={threshold}: {total}");
    }
    for tp in &r.thresholds {
        assert_eq!(tp.class_counts.iter().sum::<u64>(), 40 * 39);
        assert!(tp.class_counts[ScenarioClass::S2 as usize] > 0);
        assert_eq!(tp.records.as_ref().unwrap().len(), 40 * 39);
    }
}

#[test]
fn dataset_survives_a_file_round_trip() {
    let ds = gen_synthetic(25, 77);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    exp::write_dataset(&path, &ds).unwrap();
    assert_eq!(exp::read_dataset(&path).unwrap(), ds);
    assert_eq!(gen_synthetic(25, 77), ds);
    assert!(ds.values.iter().flatten().all(|&v| v >= 0.0));
}

#[test]
fn short_dataset_rows_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "node_id,r00\n0,1.5\n").unwrap();
    assert_eq!(exp::read_dataset(&path).unwrap_err().exit_code(), 3);
}

proptest! {
    #[test]
    fn tables_round_trip(cells in proptest::collection::vec(proptest::collection::vec("[a-z0-9 ,\"]{0,8}", 3), 0..10)) {
        let mut t = Table::new(&["a", "b", "c"]);
        for row in &cells {
            t.push(row.clone());
        }
        let back = Table::from_csv_str(&t.to_csv_string()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn floats_round_trip_through_csv(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let mut t = Table::new(&["x"]);
        t.push(vec![format!("{v}")]);
        let back = Table::from_csv_str(&t.to_csv_string()).unwrap();
        prop_assert_eq!(back.rows[0][0].parse::<f64>().unwrap(), v);
    }
}
