//! Single runs, Δ sweeps and the Δ → 0 extrapolation.

pub mod blocking;
pub mod fit;
pub mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{self, EngineError, StepStats};
use crate::model::{validate_spec, Population, RunConfig, SystemSpec, Violation};

pub use blocking::blocking_error;
pub use fit::{fit_line, LineFit};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("run with Δ = {delta} failed: {source}")]
    Engine {
        delta: f64,
        #[source]
        source: EngineError,
    },
    #[error("series of length {len} is too short for blocking (need ≥ {min})")]
    SeriesTooShort { len: usize, min: usize },
    #[error("need ≥ {need} points, got {got}")]
    TooFewPoints { got: usize, need: usize },
    #[error("standard errors must be positive")]
    NonPositiveStderr,
    #[error("singular design: all Δ values are equal")]
    SingularDesign,
}

/// Outcome of one run at fixed Δ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub delta: f64,
    pub stats: Vec<StepStats>,
    /// Mean of the per-generation estimates after burn-in.
    pub energy: f64,
    pub stderr: f64,
    pub killed_fraction: f64,
    pub crossing_fraction: f64,
    pub generations_used: usize,
}

/// Population band outside which the run rescales towards the target.
const POPULATION_BAND: f64 = 2.0;

/// Runs `n_generations` generations from a fresh initial sample.
///
/// The growth estimator reads the ratio of the signed populations entering
/// and leaving each generation. Between generations the population is
/// rescaled uniformly whenever it leaves `[target/2, 2·target]`, which keeps
/// long runs with `E_T ≠ E₀` finite without touching that ratio.
pub fn run_single(spec: &SystemSpec, cfg: &RunConfig) -> Result<RunResult, ExperimentError> {
    validate_spec(spec, cfg).map_err(ExperimentError::Invalid)?;
    let wrap = |source| ExperimentError::Engine {
        delta: cfg.delta,
        source,
    };
    let mut init_rng = engine::substream(cfg.seed, 0, u64::MAX - 1);
    let mut pop = engine::sample_initial_generation(spec, cfg.target_population, &mut init_rng);
    let mut stats = Vec::with_capacity(cfg.n_generations);
    for _ in 0..cfg.n_generations {
        let (next, step) = engine::advance_generation(&pop, spec, cfg).map_err(wrap)?;
        stats.push(step);
        pop = rebalance(next, cfg);
    }
    summarize(cfg, stats)
}

fn rebalance(pop: Population, cfg: &RunConfig) -> Population {
    let target = cfg.target_population as f64;
    let size = pop.abs_count() as f64;
    if size > POPULATION_BAND * target || size < target / POPULATION_BAND {
        engine::resample_population(pop, cfg.target_population, cfg.seed)
    } else {
        pop
    }
}

/// Burn-in trimmed averages of a finished run.
pub fn summarize(cfg: &RunConfig, stats: Vec<StepStats>) -> Result<RunResult, ExperimentError> {
    let skip = (cfg.burn_in_fraction * stats.len() as f64).floor() as usize;
    let kept = &stats[skip..];
    let energies: Vec<f64> = kept.iter().map(|s| s.energy_estimate).collect();
    let stderr = blocking_error(&energies)?;
    let energy = energies.iter().sum::<f64>() / energies.len() as f64;

    let killed: f64 = kept.iter().map(|s| s.killed_weight).sum();
    let created: f64 = kept
        .iter()
        .map(|s| s.abs_pop_after as f64 + s.intermediate_count as f64)
        .sum();
    let crossings: u64 = kept.iter().map(|s| s.crossing_attempts).sum();
    let moves: u64 = kept.iter().map(|s| s.moves).sum();
    Ok(RunResult {
        delta: cfg.delta,
        energy,
        stderr,
        killed_fraction: killed / (killed + created),
        crossing_fraction: if moves > 0 {
            crossings as f64 / moves as f64
        } else {
            0.0
        },
        generations_used: kept.len(),
        stats,
    })
}

/// One row of a Δ sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub energy: f64,
    pub stderr: f64,
    pub killed_fraction: f64,
    pub crossing_fraction: f64,
    pub generations: usize,
}

impl From<&RunResult> for SweepRow {
    fn from(r: &RunResult) -> Self {
        SweepRow {
            delta: r.delta,
            energy: r.energy,
            stderr: r.stderr,
            killed_fraction: r.killed_fraction,
            crossing_fraction: r.crossing_fraction,
            generations: r.generations_used,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    /// Successful runs, ascending in Δ.
    pub rows: Vec<SweepRow>,
    pub runs: Vec<RunResult>,
    /// Δ values whose run failed, with the reason.
    pub failures: Vec<(f64, String)>,
}

/// Geometric ladder used when no Δ list is given.
pub const DEFAULT_DELTAS: [f64; 5] = [0.0005, 0.001, 0.002, 0.004, 0.008];

/// Seed for the `index`-th point of a sweep.
pub fn sweep_seed(seed: u64, index: usize) -> u64 {
    engine::derive_seed(seed, u64::MAX, index as u64)
}

/// Runs every Δ with its own derived seed. Failed points are recorded and
/// skipped; fewer than three successes is an error.
pub fn sweep_delta(spec: &SystemSpec, cfg: &RunConfig, deltas: &[f64]) -> Result<SweepResult, ExperimentError> {
    if deltas.len() < 3 {
        return Err(ExperimentError::TooFewPoints {
            got: deltas.len(),
            need: 3,
        });
    }
    let results: Vec<(f64, Result<RunResult, ExperimentError>)> = deltas
        .par_iter()
        .enumerate()
        .map(|(i, &delta)| {
            let mut c = cfg.clone();
            c.delta = delta;
            c.seed = sweep_seed(cfg.seed, i);
            (delta, run_single(spec, &c))
        })
        .collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (delta, r) in results {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => failures.push((delta, e.to_string())),
        }
    }
    if runs.len() < 3 {
        return Err(ExperimentError::TooFewPoints {
            got: runs.len(),
            need: 3,
        });
    }
    runs.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    Ok(SweepResult {
        rows: runs.iter().map(SweepRow::from).collect(),
        runs,
        failures,
    })
}

/// Which Δ points enter the extrapolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitWindow {
    All,
    /// Only rows with `Δ ≤ max`.
    UpTo(f64),
    /// Drop the largest Δ while the worst studentized residual exceeds 2.
    Auto,
}

/// Linear `Δ → 0` extrapolation of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationFit {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_stderr: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub points: usize,
    pub r_squared: f64,
    pub max_studentized: f64,
}

/// Inverse-variance weighted fit of `E(Δ) = E₀ + a·Δ`.
pub fn extrapolate_linear(rows: &[SweepRow], window: FitWindow) -> Result<ExtrapolationFit, ExperimentError> {
    let mut sel: Vec<&SweepRow> = rows
        .iter()
        .filter(|r| match window {
            FitWindow::UpTo(max) => r.delta <= max,
            _ => true,
        })
        .collect();
    sel.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    loop {
        let x: Vec<f64> = sel.iter().map(|r| r.delta).collect();
        let y: Vec<f64> = sel.iter().map(|r| r.energy).collect();
        let s: Vec<f64> = sel.iter().map(|r| r.stderr).collect();
        let fit = fit_line(&x, &y, Some(&s))?;
        if window == FitWindow::Auto && sel.len() > 3 && fit.max_abs_studentized() > 2.0 {
            sel.pop();
            continue;
        }
        return Ok(ExtrapolationFit {
            intercept: fit.intercept,
            slope: fit.slope,
            intercept_stderr: fit.intercept_stderr,
            delta_min: x[0],
            delta_max: x[x.len() - 1],
            points: x.len(),
            r_squared: fit.r_squared,
            max_studentized: fit.max_abs_studentized(),
        });
    }
}

/// Unweighted line through the killed fractions of a sweep.
pub fn killed_fraction_fit(rows: &[SweepRow]) -> Result<LineFit, ExperimentError> {
    let x: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.killed_fraction).collect();
    fit_line(&x, &y, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(delta: f64, energy: f64, stderr: f64) -> SweepRow {
        SweepRow {
            delta,
            energy,
            stderr,
            killed_fraction: 0.0,
            crossing_fraction: 0.0,
            generations: 100,
        }
    }

    #[test]
    fn exact_line_extrapolates_exactly() {
        let rows: Vec<SweepRow> = DEFAULT_DELTAS.iter().map(|&d| row(d, -11.5 + 2000.0 * d, 1.0)).collect();
        let fit = extrapolate_linear(&rows, FitWindow::All).unwrap();
        assert!((fit.intercept + 11.5).abs() < 1e-12);
        assert!((fit.slope - 2000.0).abs() < 1e-8);
    }

    #[test]
    fn auto_window_drops_curved_tail() {
        let mut rows: Vec<SweepRow> = DEFAULT_DELTAS.iter().map(|&d| row(d, -11.5 + 200.0 * d, 0.01)).collect();
        rows[4].energy += 1.0;
        let fit = extrapolate_linear(&rows, FitWindow::Auto).unwrap();
        assert_eq!(fit.points, 4);
        assert_eq!(fit.delta_max, 0.004);
        assert!((fit.intercept + 11.5).abs() < 1e-9);
    }

    #[test]
    fn window_limits() {
        let rows: Vec<SweepRow> = DEFAULT_DELTAS.iter().map(|&d| row(d, d, 1.0)).collect();
        let fit = extrapolate_linear(&rows, FitWindow::UpTo(0.002)).unwrap();
        assert_eq!(fit.points, 3);
        assert!(extrapolate_linear(&rows, FitWindow::UpTo(0.001)).is_err());
        let same: Vec<SweepRow> = (0..3).map(|k| row(0.001, k as f64, 1.0)).collect();
        assert_eq!(
            extrapolate_linear(&same, FitWindow::All),
            Err(ExperimentError::SingularDesign)
        );
    }

    #[test]
    fn sweep_needs_three_deltas() {
        let spec = SystemSpec::oscillator(2, 1, 1.0);
        let cfg = RunConfig::new(0.001, 2.0);
        assert_eq!(
            sweep_delta(&spec, &cfg, &[0.001, 0.002]).unwrap_err(),
            ExperimentError::TooFewPoints { got: 2, need: 3 }
        );
    }

    #[test]
    fn invalid_config_is_rejected_before_running() {
        let spec = SystemSpec::oscillator(0, 1, 1.0);
        let cfg = RunConfig::new(0.001, 2.0);
        assert!(matches!(run_single(&spec, &cfg), Err(ExperimentError::Invalid(_))));
    }
}
