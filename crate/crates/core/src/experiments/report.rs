//! Run artifacts on disk: manifest, per-generation CSV, sweep CSV and fit.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ExtrapolationFit, RunResult, SweepRow};
use crate::engine::StepStats;
use crate::model::Config;

pub const GENERATIONS_FILE: &str = "generations.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FIT_FILE: &str = "fit.json";

pub const GENERATION_HEADER: &str =
    "generation,mean_beta,signed_pop,abs_pop,energy,killed_weight,crossing_attempts,intermediate_count";
pub const SWEEP_HEADER: &str = "delta,energy,stderr,killed_fraction,crossing_fraction,generations";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{0} already exists; pass --overwrite to replace it")]
    Exists(PathBuf),
    #[error("malformed sweep CSV at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Echo of what produced a directory of results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: Config,
    pub seed: u64,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deltas: Vec<f64>,
}

impl Manifest {
    pub fn new(config: Config, started: f64) -> Self {
        Manifest {
            seed: config.run.seed,
            config,
            version: version_string(),
            started,
            finished: now(),
            deltas: Vec::new(),
        }
    }
}

pub fn version_string() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

pub fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn generations_csv(stats: &[StepStats]) -> String {
    let mut out = String::from(GENERATION_HEADER);
    out.push('\n');
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.generation,
            s.mean_beta,
            s.signed_pop_after,
            s.abs_pop_after,
            s.energy_estimate,
            s.killed_weight,
            s.crossing_attempts,
            s.intermediate_count
        ));
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.delta, r.energy, r.stderr, r.killed_fraction, r.crossing_fraction, r.generations
        ));
    }
    out
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>, ReportError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SWEEP_HEADER => {}
        _ => {
            return Err(ReportError::Parse {
                line: 1,
                reason: format!("expected header `{SWEEP_HEADER}`"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| ReportError::Parse { line: i + 1, reason };
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 6 {
            return Err(bad(format!("expected 6 columns, got {}", cols.len())));
        }
        let f = |k: usize| cols[k].parse::<f64>().map_err(|e| bad(e.to_string()));
        rows.push(SweepRow {
            delta: f(0)?,
            energy: f(1)?,
            stderr: f(2)?,
            killed_fraction: f(3)?,
            crossing_fraction: f(4)?,
            generations: cols[5].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
        });
    }
    Ok(rows)
}

fn write_new(dir: &Path, name: &str, contents: &str, overwrite: bool) -> Result<(), ReportError> {
    let path = dir.join(name);
    if path.exists() && !overwrite {
        return Err(ReportError::Exists(path));
    }
    fs::write(path, contents)?;
    Ok(())
}

/// Refuses up front so a collision never leaves a half-written directory.
fn check_free(dir: &Path, names: &[&str], overwrite: bool) -> Result<(), ReportError> {
    if overwrite {
        return Ok(());
    }
    for name in names {
        let path = dir.join(name);
        if path.exists() {
            return Err(ReportError::Exists(path));
        }
    }
    Ok(())
}

/// Writes `manifest.json` and `generations.csv` for a single run.
pub fn write_run(dir: &Path, manifest: &Manifest, run: &RunResult, overwrite: bool) -> Result<(), ReportError> {
    check_free(dir, &[MANIFEST_FILE, GENERATIONS_FILE], overwrite)?;
    fs::create_dir_all(dir)?;
    write_new(dir, GENERATIONS_FILE, &generations_csv(&run.stats), overwrite)?;
    write_new(dir, MANIFEST_FILE, &serde_json::to_string_pretty(manifest)?, overwrite)
}

/// Writes the sweep CSV, the fit summary, the manifest and one
/// per-generation CSV per Δ under `delta-<k>/`.
pub fn write_sweep(
    dir: &Path,
    manifest: &Manifest,
    runs: &[RunResult],
    rows: &[SweepRow],
    fit: Option<&ExtrapolationFit>,
    overwrite: bool,
) -> Result<(), ReportError> {
    check_free(dir, &[MANIFEST_FILE, SWEEP_FILE, FIT_FILE], overwrite)?;
    fs::create_dir_all(dir)?;
    for (k, run) in runs.iter().enumerate() {
        let sub = dir.join(format!("delta-{k}"));
        check_free(&sub, &[GENERATIONS_FILE], overwrite)?;
        fs::create_dir_all(&sub)?;
        write_new(&sub, GENERATIONS_FILE, &generations_csv(&run.stats), overwrite)?;
    }
    write_new(dir, SWEEP_FILE, &sweep_csv(rows), overwrite)?;
    if let Some(fit) = fit {
        write_new(dir, FIT_FILE, &serde_json::to_string_pretty(fit)?, overwrite)?;
    }
    write_new(dir, MANIFEST_FILE, &serde_json::to_string_pretty(manifest)?, overwrite)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, ReportError> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?)
}
