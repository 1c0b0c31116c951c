//! Library-level runs through the experiment and report layers.

use pauli_gfmc::experiments::{self, report, FitWindow};
use pauli_gfmc::model::{Config, RunConfig, SystemSpec};
use pauli_gfmc::oracle;

fn small_cfg(delta: f64, trial_energy: f64) -> RunConfig {
    let mut cfg = RunConfig::new(delta, trial_energy);
    cfg.target_population = 100;
    cfg.n_generations = 200;
    cfg.seed = 4;
    cfg
}

#[test]
fn run_report_round_trip() {
    let spec = SystemSpec::square_well(3, 2, 3.5, 2.0);
    let cfg = small_cfg(0.004, -7.0);
    let run = experiments::run_single(&spec, &cfg).unwrap();
    assert_eq!(run.stats.len(), 200);
    assert_eq!(run.generations_used, 160);

    let tmp = tempfile::tempdir().unwrap();
    let config = Config { system: spec, run: cfg };
    let manifest = report::Manifest::new(config.clone(), report::now());
    report::write_run(tmp.path(), &manifest, &run, false).unwrap();
    assert_eq!(report::read_manifest(tmp.path()).unwrap().config, config);
    assert!(matches!(
        report::write_run(tmp.path(), &manifest, &run, false),
        Err(report::ReportError::Exists(_))
    ));
    report::write_run(tmp.path(), &manifest, &run, true).unwrap();
}

#[test]
fn sweep_rows_survive_csv() {
    let spec = SystemSpec::square_well(2, 1, 3.5, 2.0);
    let sweep = experiments::sweep_delta(&spec, &small_cfg(0.0, -5.9), &[0.002, 0.004, 0.008]).unwrap();
    assert!(sweep.failures.is_empty());
    let parsed = report::parse_sweep_csv(&report::sweep_csv(&sweep.rows)).unwrap();
    assert_eq!(parsed, sweep.rows);
    let fit = experiments::extrapolate_linear(&parsed, FitWindow::All).unwrap();
    assert_eq!(fit.points, 3);
}

#[test]
fn sweeps_are_reproducible() {
    let spec = SystemSpec::square_well(2, 1, 3.5, 2.0);
    let cfg = small_cfg(0.0, -5.9);
    let a = experiments::sweep_delta(&spec, &cfg, &[0.002, 0.004, 0.008]).unwrap();
    let b = experiments::sweep_delta(&spec, &cfg, &[0.002, 0.004, 0.008]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_particle_growth_rate_matches_oracle() {
    let spec = SystemSpec::square_well(1, 1, 3.5, 2.0);
    let exact = oracle::fermi_ground_energy(&oracle::levels_for(&spec).unwrap(), 1).unwrap();
    let mut cfg = RunConfig::new(0.001, exact);
    cfg.m_max = 100;
    cfg.target_population = 500;
    cfg.n_generations = 4000;
    let run = experiments::run_single(&spec, &cfg).unwrap();
    assert!(
        (run.energy - exact).abs() <= 3.0 * run.stderr + 0.02,
        "{} ± {} vs {exact}",
        run.energy,
        run.stderr
    );
}

#[test]
fn trial_problem_keeps_signed_population_level() {
    let spec = SystemSpec::oscillator(2, 1, 1.0);
    let mut cfg = RunConfig::new(0.002, spec.trial_shell_energy());
    cfg.target_population = 400;
    cfg.n_generations = 2000;
    let run = experiments::run_single(&spec, &cfg).unwrap();
    let first = run.stats[..200].iter().map(|s| s.signed_pop_after).sum::<f64>() / 200.0;
    let last = run.stats[1800..].iter().map(|s| s.signed_pop_after).sum::<f64>() / 200.0;
    assert!((last / first - 1.0).abs() < 0.25, "{first} → {last}");
}
