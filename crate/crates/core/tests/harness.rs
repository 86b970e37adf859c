use std::path::Path;

use noncrit::harness::{
    export_matrix, list_experiments, run_in, Experiment, ExperimentConfig, Status, SurvivalTailParams,
};
use noncrit::Error;

fn config_file(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::from_path(&path).unwrap()
}

fn small_e1(seed: u64, threads: usize) -> ExperimentConfig {
    let params = SurvivalTailParams {
        n_walks: 4_000,
        n_max: 20,
        mean_horizon: 40,
        ..SurvivalTailParams::default()
    };
    let mut config = ExperimentConfig::new(Experiment::E1(params), seed);
    config.threads = Some(threads);
    config
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let config = ExperimentConfig::from_path(&entry.unwrap().path()).unwrap();
        ids.push(config.experiment.id());
    }
    for entry in list_experiments() {
        assert!(ids.contains(&entry.id), "no config for {}", entry.id);
    }
}

#[test]
fn two_site_dhar_table() {
    let root = tempfile::tempdir().unwrap();
    let report = run_in(&config_file("e2-two-site.toml"), root.path()).unwrap();
    assert_eq!(report.status, Status::Pass);
    let summary = std::fs::read_to_string(report.dir.join("summary.txt")).unwrap();
    let rows: Vec<&str> = summary.lines().filter(|l| l.starts_with("2 ")).collect();
    assert_eq!(rows.len(), 3, "{summary}");
    let csv = std::fs::read_to_string(report.dir.join("dhar.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn malformed_pattern_names_its_field() {
    let text = r#"
        [experiment]
        id = "green-rows"
        d = 2
        x = [0, 0]
        volumes = [2, 4]
        pattern = { kind = "sublattice", period = [2] }
    "#;
    match ExperimentConfig::from_toml_str(text).unwrap_err() {
        Error::Config { field, .. } => assert_eq!(field, "experiment.pattern"),
        e => panic!("{e}"),
    }
    let text = r#"
        [experiment]
        id = "green-rows"
        d = 1
        x = [0]
        volumes = [2, 4]
        pattern = { kind = "stripes" }
    "#;
    let err = ExperimentConfig::from_toml_str(text).unwrap_err().to_string();
    assert!(err.contains("experiment.pattern"), "{err}");
}

#[test]
fn outputs_do_not_depend_on_threads() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_in(&small_e1(17, 1), a.path()).unwrap();
    let rb = run_in(&small_e1(17, 3), b.path()).unwrap();
    let data = |r: &noncrit::harness::RunReport| -> Vec<(String, String)> {
        r.files
            .iter()
            .filter(|f| f.path.ends_with(".csv") || f.path.ends_with(".json"))
            .map(|f| (f.path.clone(), f.sha256.clone()))
            .collect()
    };
    assert!(!data(&ra).is_empty());
    assert_eq!(data(&ra), data(&rb));
    let other = run_in(&small_e1(18, 1), b.path()).unwrap();
    assert_ne!(data(&ra), data(&other));
}

#[test]
fn manifest_lists_every_file() {
    let root = tempfile::tempdir().unwrap();
    let report = run_in(&ExperimentConfig::new(Experiment::default_for("trivial").unwrap(), 2), root.path()).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report.dir.join("manifest.json")).unwrap()).unwrap();
    let listed: Vec<&str> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["path"].as_str().unwrap())
        .collect();
    let mut on_disk: Vec<String> = std::fs::read_dir(&report.dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    let mut listed_sorted: Vec<String> = listed.iter().map(|s| s.to_string()).collect();
    listed_sorted.sort();
    assert_eq!(listed_sorted, on_disk);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["partial"], false);
    assert!(manifest["wall_time_secs"].as_f64().unwrap() >= 0.0);
    for f in manifest["files"].as_array().unwrap() {
        assert_eq!(f["sha256"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn export_writes_matrix_and_edges() {
    let root = tempfile::tempdir().unwrap();
    let written = export_matrix(&config_file("e2-two-site.toml"), root.path()).unwrap();
    assert_eq!(written.len(), 2);
    let matrix = std::fs::read_to_string(&written[0]).unwrap();
    assert!(matrix.lines().any(|l| l == "0 1 -1"), "{matrix}");
    assert_eq!(std::fs::read_to_string(&written[1]).unwrap(), "0 1\n");
    let e7 = ExperimentConfig::new(Experiment::default_for("e7").unwrap(), 0);
    assert!(export_matrix(&e7, root.path()).is_err());
}
