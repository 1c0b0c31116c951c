//! Domain types shared by every other module.
//!
//! Units are natural: `ħ = 1`, lengths in the same units as the well radius,
//! energies in the same units as the well depth. The kinetic term is
//! `-∇²/(2m)`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Which external potential the walkers feel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    /// Spherical (or slab, in 1D) well of depth `V₀` and radius `R`.
    #[default]
    SquareWell,
    /// The trial oscillator itself. The resolvent kernel vanishes, which
    /// isolates the exchange mechanism against exact oscillator shell sums.
    Trial,
}

/// Cartesian oscillator excitation numbers, one per axis.
pub type OrbitalIndex = Vec<u32>;

/// Physical problem definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawSystemSpec")]
pub struct SystemSpec {
    pub n_particles: usize,
    pub dimension: usize,
    pub mass: f64,
    /// Positive depth; the potential inside the well is `-well_depth`.
    pub well_depth: f64,
    /// Sphere radius in 2D/3D, half-width in 1D.
    pub well_radius: f64,
    pub trial_omega: f64,
    pub trial_offset: f64,
    pub guidance_omega: f64,
    pub guidance_orbitals: Vec<OrbitalIndex>,
    pub potential: PotentialKind,
}

/// Wire form of [`SystemSpec`]: omitted knobs fall back to defaults that
/// depend on the other fields.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystemSpec {
    n_particles: usize,
    dimension: usize,
    #[serde(default = "default_mass")]
    mass: f64,
    well_depth: f64,
    well_radius: f64,
    #[serde(default = "default_omega")]
    trial_omega: f64,
    #[serde(default)]
    trial_offset: Option<f64>,
    #[serde(default = "default_omega")]
    guidance_omega: f64,
    #[serde(default)]
    guidance_orbitals: Option<Vec<OrbitalIndex>>,
    #[serde(default)]
    potential: PotentialKind,
}

fn default_mass() -> f64 {
    1.0
}

fn default_omega() -> f64 {
    0.5
}

impl From<RawSystemSpec> for SystemSpec {
    fn from(raw: RawSystemSpec) -> Self {
        let trial_offset = raw
            .trial_offset
            .unwrap_or(-raw.well_depth);
        let guidance_orbitals = raw
            .guidance_orbitals
            .unwrap_or_else(|| lowest_orbitals(raw.n_particles, raw.dimension));
        SystemSpec {
            n_particles: raw.n_particles,
            dimension: raw.dimension,
            mass: raw.mass,
            well_depth: raw.well_depth,
            well_radius: raw.well_radius,
            trial_omega: raw.trial_omega,
            trial_offset,
            guidance_omega: raw.guidance_omega,
            guidance_orbitals,
            potential: raw.potential,
        }
    }
}

impl SystemSpec {
    /// Square well with default oscillator parameters: `ω_T = ω_G = 0.5`,
    /// `c_T = -V₀` and the `N` lowest guidance orbitals. For `N ≥ 2` that
    /// offset keeps `V_T - V` non-negative everywhere, so the kernel never
    /// flips a walker's sign.
    pub fn square_well(n_particles: usize, dimension: usize, well_depth: f64, well_radius: f64) -> Self {
        SystemSpec {
            n_particles,
            dimension,
            mass: 1.0,
            well_depth,
            well_radius,
            trial_omega: 0.5,
            trial_offset: -well_depth,
            guidance_omega: 0.5,
            guidance_orbitals: lowest_orbitals(n_particles, dimension),
            potential: PotentialKind::SquareWell,
        }
    }

    /// Pure oscillator problem at frequency `omega` with `c_T = 0`; the
    /// guidance function is the exact fermionic ground state.
    pub fn oscillator(n_particles: usize, dimension: usize, omega: f64) -> Self {
        SystemSpec {
            n_particles,
            dimension,
            mass: 1.0,
            well_depth: 1.0,
            well_radius: 1.0,
            trial_omega: omega,
            trial_offset: 0.0,
            guidance_omega: omega,
            guidance_orbitals: lowest_orbitals(n_particles, dimension),
            potential: PotentialKind::Trial,
        }
    }

    /// Length of a walker coordinate vector.
    pub fn n_coords(&self) -> usize {
        self.n_particles * self.dimension
    }

    /// Exact ground energy of the trial oscillator for `N` spinless fermions
    /// in the configured guidance orbitals, evaluated at `ω_T`.
    pub fn trial_shell_energy(&self) -> f64 {
        let d = self.dimension as f64;
        self.guidance_orbitals
            .iter()
            .map(|idx| {
                let quanta: u32 = idx.iter().sum();
                self.trial_omega * (quanta as f64 + d / 2.0)
            })
            .sum::<f64>()
            + self.trial_offset
    }
}

/// The `n` lowest Cartesian oscillator orbitals in `dimension` axes, ordered
/// by total quanta and then lexicographically.
pub fn lowest_orbitals(n: usize, dimension: usize) -> Vec<OrbitalIndex> {
    if dimension == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(n);
    let mut shell = 0u32;
    while out.len() < n {
        let mut members = Vec::new();
        let mut idx = vec![0u32; dimension];
        shell_members(shell, 0, &mut idx, &mut members);
        members.sort();
        for m in members {
            if out.len() == n {
                break;
            }
            out.push(m);
        }
        shell += 1;
    }
    out
}

fn shell_members(remaining: u32, axis: usize, idx: &mut Vec<u32>, out: &mut Vec<OrbitalIndex>) {
    if axis + 1 == idx.len() {
        idx[axis] = remaining;
        out.push(idx.clone());
        return;
    }
    for q in 0..=remaining {
        idx[axis] = q;
        shell_members(remaining - q, axis + 1, idx, out);
    }
}

/// Algorithm knobs for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Mean of the exponentially sampled imaginary-time step.
    pub delta: f64,
    pub trial_energy: f64,
    #[serde(default = "default_m_max")]
    pub m_max: u32,
    pub target_population: usize,
    pub n_generations: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_m_max() -> u32 {
    5
}

fn default_burn_in() -> f64 {
    0.2
}

impl RunConfig {
    pub fn new(delta: f64, trial_energy: f64) -> Self {
        RunConfig {
            delta,
            trial_energy,
            m_max: default_m_max(),
            target_population: 1000,
            n_generations: 5000,
            burn_in_fraction: default_burn_in(),
            seed: 0,
        }
    }
}

/// Configuration file layout: `{"system": {...}, "run": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub system: SystemSpec,
    pub run: RunConfig,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// One point of the population.
#[derive(Debug, Clone, PartialEq)]
pub struct Walker {
    pub coords: Vec<f64>,
    /// Either `0` or `π`.
    pub phase: f64,
}

impl Walker {
    pub fn new(coords: Vec<f64>) -> Self {
        Walker { coords, phase: 0.0 }
    }

    /// `cos(phase)`, exactly `±1` for the phases the engine produces.
    pub fn sign(&self) -> f64 {
        if self.phase == 0.0 {
            1.0
        } else {
            self.phase.cos().round()
        }
    }

    pub fn position(&self, particle: usize, dimension: usize) -> &[f64] {
        &self.coords[particle * dimension..(particle + 1) * dimension]
    }
}

/// Adds two phases modulo `2π`. Sums of `0` and `π` stay exactly in `{0, π}`.
pub fn add_phase(a: f64, b: f64) -> f64 {
    let s = a + b;
    if s >= 2.0 * PI {
        s - 2.0 * PI
    } else {
        s
    }
}

/// A generation of walkers with cached signed and absolute counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    walkers: Vec<Walker>,
    generation: usize,
    signed_count: f64,
}

impl Population {
    pub fn new(walkers: Vec<Walker>, generation: usize) -> Self {
        let signed_count = signed_sum(&walkers);
        Population {
            walkers,
            generation,
            signed_count,
        }
    }

    pub fn walkers(&self) -> &[Walker] {
        &self.walkers
    }

    pub fn into_walkers(self) -> Vec<Walker> {
        self.walkers
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    /// `Σ_k cos(phase_k)`.
    pub fn signed_count(&self) -> f64 {
        self.signed_count
    }

    pub fn abs_count(&self) -> usize {
        self.walkers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walkers.is_empty()
    }
}

fn signed_sum(walkers: &[Walker]) -> f64 {
    walkers.iter().map(Walker::sign).sum()
}

/// One violated invariant found by [`validate_spec`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Checks every invariant of both inputs and reports all violations at once.
pub fn validate_spec(spec: &SystemSpec, cfg: &RunConfig) -> Result<(), Vec<Violation>> {
    let mut errs = Vec::new();
    let mut fail = |msg: &str| errs.push(Violation(msg.to_string()));

    if spec.n_particles < 1 {
        fail("n_particles ≥ 1");
    }
    if !(1..=3).contains(&spec.dimension) {
        fail("dimension ∈ {1,2,3}");
    }
    if !(spec.mass > 0.0) {
        fail("mass > 0");
    }
    if !(spec.well_depth > 0.0) {
        fail("well_depth > 0");
    }
    if !(spec.well_radius > 0.0) {
        fail("well_radius > 0");
    }
    if !(spec.trial_omega > 0.0) {
        fail("trial_omega > 0");
    }
    if !(spec.guidance_omega > 0.0) {
        fail("guidance_omega > 0");
    }
    if !spec.trial_offset.is_finite() {
        fail("trial_offset finite");
    }
    if spec.guidance_orbitals.len() != spec.n_particles {
        fail("guidance_orbitals has exactly n_particles entries");
    }
    if spec
        .guidance_orbitals
        .iter()
        .any(|idx| idx.len() != spec.dimension)
    {
        fail("each guidance orbital has one index per dimension");
    }
    let mut seen = spec.guidance_orbitals.clone();
    seen.sort();
    seen.dedup();
    if seen.len() != spec.guidance_orbitals.len() {
        fail("distinct orbitals");
    }

    if !(cfg.delta > 0.0) {
        fail("delta > 0");
    }
    if !cfg.trial_energy.is_finite() {
        fail("trial_energy finite");
    }
    if cfg.m_max < 1 {
        fail("m_max ≥ 1");
    }
    if cfg.target_population < 10 {
        fail("target_population ≥ 10");
    }
    if cfg.n_generations < 1 {
        fail("n_generations ≥ 1");
    }
    if !(0.0..1.0).contains(&cfg.burn_in_fraction) {
        fail("burn_in_fraction ∈ [0,1)");
    }

    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_spec() -> SystemSpec {
        SystemSpec::square_well(9, 3, 3.5, 2.0)
    }

    #[test]
    fn reference_parameters_are_valid() {
        let cfg = RunConfig::new(0.0005, -10.5);
        assert_eq!(validate_spec(&reference_spec(), &cfg), Ok(()));
    }

    #[test]
    fn zero_particles_rejected() {
        let mut spec = reference_spec();
        spec.n_particles = 0;
        spec.guidance_orbitals.clear();
        let errs = validate_spec(&spec, &RunConfig::new(0.001, 0.0)).unwrap_err();
        assert!(errs.iter().any(|e| e.0 == "n_particles ≥ 1"));
    }

    #[test]
    fn duplicate_orbital_rejected() {
        let mut spec = reference_spec();
        spec.guidance_orbitals[1] = spec.guidance_orbitals[0].clone();
        let errs = validate_spec(&spec, &RunConfig::new(0.001, 0.0)).unwrap_err();
        assert_eq!(errs, vec![Violation("distinct orbitals".into())]);
    }

    #[test]
    fn all_violations_reported() {
        let mut spec = reference_spec();
        spec.mass = -1.0;
        spec.well_radius = 0.0;
        let mut cfg = RunConfig::new(-1.0, 0.0);
        cfg.target_population = 3;
        let errs = validate_spec(&spec, &cfg).unwrap_err();
        assert_eq!(errs.len(), 4);
    }

    #[test]
    fn lowest_orbitals_fill_shells() {
        let orbs = lowest_orbitals(9, 3);
        let quanta: Vec<u32> = orbs.iter().map(|o| o.iter().sum()).collect();
        assert_eq!(quanta, vec![0, 1, 1, 1, 2, 2, 2, 2, 2]);
        assert_eq!(orbs[1], vec![0, 0, 1]);
        assert_eq!(lowest_orbitals(3, 1), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn phases_close_under_addition() {
        assert_eq!(add_phase(PI, PI), 0.0);
        assert_eq!(add_phase(0.0, PI), PI);
        let w = Walker { coords: vec![0.0], phase: PI };
        assert_eq!(w.sign(), -1.0);
    }

    #[test]
    fn config_defaults_fill_in() {
        let json = r#"{"system": {"n_particles": 2, "dimension": 1, "well_depth": 3.5, "well_radius": 2.0},
                       "run": {"delta": 0.001, "trial_energy": -6.0, "target_population": 500, "n_generations": 100}}"#;
        let cfg = Config::from_json(json).unwrap();
        assert_eq!(cfg.system.trial_offset, -3.5);
        assert_eq!(cfg.system.guidance_orbitals, vec![vec![0], vec![1]]);
        assert_eq!(cfg.run.m_max, 5);
    }

    #[test]
    fn unknown_keys_rejected() {
        let json = r#"{"system": {"n_particles": 2, "dimension": 1, "well_depth": 3.5, "well_radius": 2.0, "spin": 1},
                       "run": {"delta": 0.001, "trial_energy": -6.0, "target_population": 500, "n_generations": 100}}"#;
        assert!(Config::from_json(json).is_err());
        let json = r#"{"system": {"n_particles": 2, "dimension": 1, "well_depth": 3.5, "well_radius": 2.0},
                       "run": {"delta": 0.001, "trial_energy": -6.0, "target_population": 500, "n_generations": 100},
                       "extra": {}}"#;
        assert!(Config::from_json(json).is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        prop_compose! {
            fn any_config()(n in 1usize..6, d in 1usize..4, depth in 0.1f64..10.0,
                            radius in 0.1f64..5.0, omega in 0.1f64..3.0, offset in -20.0f64..20.0,
                            delta in 1e-5f64..0.1, et in -20.0f64..20.0, m_max in 1u32..100,
                            pop in 10usize..5000, gens in 1usize..10000, burn in 0.0f64..0.99,
                            seed in any::<u64>()) -> Config {
                let mut system = SystemSpec::square_well(n, d, depth, radius);
                system.trial_omega = omega;
                system.trial_offset = offset;
                let run = RunConfig { delta, trial_energy: et, m_max, target_population: pop,
                                      n_generations: gens, burn_in_fraction: burn, seed };
                Config { system, run }
            }
        }

        proptest! {
            #[test]
            fn json_round_trip(cfg in any_config()) {
                let back = Config::from_json(&cfg.to_json()).unwrap();
                prop_assert_eq!(back, cfg);
            }

            #[test]
            fn validation_is_idempotent(cfg in any_config()) {
                let a = validate_spec(&cfg.system, &cfg.run);
                let b = validate_spec(&cfg.system, &cfg.run);
                prop_assert_eq!(a, b);
            }
        }
    }
}
