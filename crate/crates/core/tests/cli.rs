//! Drives the `pauli-gfmc` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pauli_gfmc::experiments::report::{self, Manifest};
use pauli_gfmc::model::Config;

const CONFIG: &str = r#"{
  "system": {"n_particles": 2, "dimension": 1, "well_depth": 3.5, "well_radius": 2.0},
  "run": {"delta": 0.004, "trial_energy": -5.9, "target_population": 60, "n_generations": 120, "seed": 11}
}"#;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pauli-gfmc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn run_writes_manifest_and_generations() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), CONFIG);
    let out_dir = tmp.path().join("run");
    let out = cli(&["run", "--config", &config, "--seed", "99", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));

    let csv = fs::read_to_string(out_dir.join(report::GENERATIONS_FILE)).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(report::GENERATION_HEADER));
    assert_eq!(lines.count(), 120);

    let manifest = report::read_manifest(&out_dir).unwrap();
    let mut expected = Config::from_json(CONFIG).unwrap();
    expected.run.seed = 99;
    assert_eq!(manifest.config, expected);
    assert_eq!(manifest.seed, 99);
    assert!(manifest.finished >= manifest.started);
    assert!(manifest.version.starts_with("pauli-gfmc "));
}

#[test]
fn same_seed_gives_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), CONFIG);
    let read = |name: &str| {
        let dir = tmp.path().join(name);
        let out = cli(&["run", "--config", &config, "--seed", "5", "--out", dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
        fs::read(dir.join(report::GENERATIONS_FILE)).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn refuses_to_overwrite_without_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), CONFIG);
    let dir = tmp.path().join("run");
    let dir = dir.to_str().unwrap();
    assert!(cli(&["run", "--config", &config, "--out", dir]).status.success());
    let again = cli(&["run", "--config", &config, "--out", dir]);
    assert!(!again.status.success());
    assert!(stderr(&again).contains("--overwrite"), "{}", stderr(&again));
    let forced = cli(&["--overwrite", "run", "--config", &config, "--out", dir]);
    assert!(forced.status.success(), "{}", stderr(&forced));
}

#[test]
fn sweep_then_extrapolate() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), CONFIG);
    let dir = tmp.path().join("sweep");
    let out = cli(&[
        "sweep",
        "--config",
        &config,
        "--deltas",
        "0.002,0.004,0.008",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let csv = fs::read_to_string(dir.join(report::SWEEP_FILE)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], report::SWEEP_HEADER);
    assert_eq!(lines.len(), 4);
    assert!(lines.iter().all(|l| l.split(',').count() == 6));
    for k in 0..3 {
        assert!(dir.join(format!("delta-{k}")).join(report::GENERATIONS_FILE).exists());
    }
    let manifest: Manifest = report::read_manifest(&dir).unwrap();
    assert_eq!(manifest.deltas, vec![0.002, 0.004, 0.008]);

    let fit = cli(&["extrapolate", "--in", dir.join(report::SWEEP_FILE).to_str().unwrap(), "--window", "all"]);
    assert!(fit.status.success(), "{}", stderr(&fit));
    let json: serde_json::Value = serde_json::from_slice(&fit.stdout).unwrap();
    assert_eq!(json["points"], 3);
    assert!(json["intercept"].as_f64().unwrap().is_finite());
}

#[test]
fn sweep_needs_three_deltas() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), CONFIG);
    let dir = tmp.path().join("sweep");
    let out = cli(&["sweep", "--config", &config, "--deltas", "0.002,0.004", "--out", dir.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("need ≥ 3"), "{}", stderr(&out));
    assert!(!dir.exists());
}

#[test]
fn oracle_prints_levels_and_sum() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), CONFIG);
    let out = cli(&["oracle", "--config", &config]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("nodes,l,energy,degeneracy\n"));
    let last = text.lines().last().unwrap();
    let energy: f64 = last.rsplit(' ').next().unwrap().parse().unwrap();
    assert!((energy + 5.9226).abs() < 1e-3, "{last}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &CONFIG.replace("\"seed\": 11", "\"seed\": 11, \"sede\": 3"));
    let out = cli(&["oracle", "--config", &config]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("sede"), "{}", stderr(&out));
}

#[test]
fn invalid_config_lists_every_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = CONFIG.replace("\"delta\": 0.004", "\"delta\": -1.0").replace("\"dimension\": 1", "\"dimension\": 4");
    let config = write_config(tmp.path(), &bad);
    let out = cli(&["run", "--config", &config, "--out", tmp.path().join("x").to_str().unwrap()]);
    assert!(!out.status.success());
    let msg = stderr(&out);
    assert!(msg.contains("delta > 0") && msg.contains("dimension"), "{msg}");
}
