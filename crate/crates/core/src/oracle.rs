//! Exact reference results for the square well.
//!
//! Single-particle spectra come from the textbook matching conditions,
//! solved by bisection on monotone branches. Non-interacting spinless
//! fermions fill the lowest levels, so the many-body ground energy is a
//! partial sum of the level table.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::Serialize;
use thiserror::Error;

use crate::model::SystemSpec;
use crate::potentials::{pauli_action, well_value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("system cannot bind {requested} fermions ({available} bound states)")]
    TooFewBoundStates { requested: usize, available: usize },
    #[error("reference spectra exist for dimension 1 and 3 only, got {0}")]
    UnsupportedDimension(usize),
}

/// One single-particle level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Level {
    /// Number of nodes of the (radial) wave function.
    pub nodes: u32,
    /// Angular momentum, present for the 3D well only.
    pub l: Option<u32>,
    pub energy: f64,
    pub degeneracy: u32,
}

/// Bound levels sorted by energy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelTable {
    pub entries: Vec<Level>,
}

impl LevelTable {
    fn sorted(mut entries: Vec<Level>) -> Self {
        entries.sort_by(|a, b| a.energy.total_cmp(&b.energy));
        LevelTable { entries }
    }

    /// Number of single-particle states counting degeneracy.
    pub fn state_count(&self) -> usize {
        self.entries.iter().map(|l| l.degeneracy as usize).sum()
    }

    /// CSV with header `nodes,l,energy,degeneracy`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("nodes,l,energy,degeneracy\n");
        for lv in &self.entries {
            let l = lv.l.map(|l| l.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{:.12},{}\n", lv.nodes, l, lv.energy, lv.degeneracy));
        }
        out
    }
}

/// Bisection for `f(lo) < 0 < f(hi)`; `hi` may be a pole and is never
/// evaluated.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn well_strength(v0: f64, size: f64, mass: f64) -> f64 {
    size * (2.0 * mass * v0).sqrt()
}

/// Levels of the 1D well of depth `v0` on `|x| ≤ halfwidth`.
pub fn bound_states_1d(v0: f64, halfwidth: f64, mass: f64) -> LevelTable {
    let z0 = well_strength(v0, halfwidth, mass);
    let q = |z: f64| (z0 * z0 - z * z).max(0.0).sqrt();
    let energy = |z: f64| z * z / (2.0 * mass * halfwidth * halfwidth) - v0;
    let mut levels = Vec::new();
    let mut n = 0u32;
    loop {
        let base = n as f64 * PI;
        if base >= z0 {
            break;
        }
        // Even: z tan z = q on [nπ, nπ + π/2).
        let hi = (base + FRAC_PI_2).min(z0);
        let z = bisect(|z| z * z.tan() - q(z), base, hi);
        levels.push(Level {
            nodes: 2 * n,
            l: None,
            energy: energy(z),
            degeneracy: 1,
        });
        // Odd: -z cot z = q on (nπ + π/2, (n+1)π).
        let lo = base + FRAC_PI_2;
        if lo < z0 {
            let hi = (base + PI).min(z0);
            let z = bisect(|z| -z / z.tan() - q(z), lo, hi);
            levels.push(Level {
                nodes: 2 * n + 1,
                l: None,
                energy: energy(z),
                degeneracy: 1,
            });
        }
        n += 1;
    }
    LevelTable::sorted(levels)
}

/// Pole-free 1D matching residual for a level, dimensionless.
pub fn matching_residual_1d(level: &Level, v0: f64, halfwidth: f64, mass: f64) -> f64 {
    let z0 = well_strength(v0, halfwidth, mass);
    let z = ((level.energy + v0) * 2.0 * mass).sqrt() * halfwidth;
    let q = (z0 * z0 - z * z).max(0.0).sqrt();
    let r = if level.nodes % 2 == 0 {
        z * z.sin() - q * z.cos()
    } else {
        z * z.cos() + q * z.sin()
    };
    r / z0
}

/// Spherical Bessel function `j_l(x)` by downward recurrence.
pub fn spherical_j(l: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if l == 0 { 1.0 } else { 0.0 };
    }
    if x.abs() < 1e-4 {
        // Leading two series terms.
        let mut df = 1.0;
        for k in 0..=l {
            df *= (2 * k + 1) as f64;
        }
        return x.powi(l as i32) / df * (1.0 - x * x / (2.0 * (2 * l + 3) as f64));
    }
    let start = l as usize + 20 + x.abs() as usize;
    let mut above = 0.0;
    let mut cur = 1e-300;
    let mut at_l = 0.0;
    let mut j1 = 0.0;
    let j0;
    let mut k = start;
    loop {
        // j_{k-1} = (2k+1)/x j_k - j_{k+1}
        let below = (2 * k + 1) as f64 / x * cur - above;
        above = cur;
        cur = below;
        k -= 1;
        if k == l as usize {
            at_l = cur;
        }
        if k == 1 {
            j1 = cur;
        }
        if cur.abs() > 1e250 {
            above *= 1e-250;
            cur *= 1e-250;
            at_l *= 1e-250;
            j1 *= 1e-250;
        }
        if k == 0 {
            j0 = cur;
            break;
        }
    }
    let true_j0 = x.sin() / x;
    let true_j1 = x.sin() / (x * x) - x.cos() / x;
    if true_j0.abs() >= true_j1.abs() {
        at_l * true_j0 / j0
    } else {
        at_l * true_j1 / j1
    }
}

/// Exponentially scaled modified spherical Bessel function of the second
/// kind, `e^y k_l(y)` with `k_0(y) = e^{-y}/y`.
pub fn scaled_spherical_k(l: u32, y: f64) -> f64 {
    let mut km = 1.0 / y;
    if l == 0 {
        return km;
    }
    let mut k = (1.0 + y) / (y * y);
    for n in 1..l {
        let next = km + (2 * n + 1) as f64 / y * k;
        km = k;
        k = next;
    }
    k
}

/// `y k_{l+1}(y) / k_l(y)`, with its `y → 0` limit `2l+1`.
fn exterior_ratio(l: u32, y: f64) -> f64 {
    if y <= 0.0 {
        return (2 * l + 1) as f64;
    }
    y * scaled_spherical_k(l + 1, y) / scaled_spherical_k(l, y)
}

/// `x j_{l+1}(x) / j_l(x)`.
fn interior_ratio(l: u32, x: f64) -> f64 {
    x * spherical_j(l + 1, x) / spherical_j(l, x)
}

/// Zeros of `j_l` in `(0, limit)`.
fn bessel_zeros(l: u32, limit: f64) -> Vec<f64> {
    let step = 1e-2;
    let mut zeros = Vec::new();
    let mut a = step;
    let mut fa = spherical_j(l, a);
    while a < limit {
        let b = (a + step).min(limit);
        let fb = spherical_j(l, b);
        if fa == 0.0 {
            zeros.push(a);
        } else if fa.signum() != fb.signum() && fb != 0.0 {
            let s = fa.signum();
            zeros.push(bisect(|x| -s * spherical_j(l, x), a, b));
        }
        a = b;
        fa = fb;
    }
    zeros
}

/// Radial levels of the spherical well for one angular momentum.
fn radial_levels_for_l(l: u32, v0: f64, radius: f64, mass: f64) -> Vec<Level> {
    let z0 = well_strength(v0, radius, mass);
    let y = |x: f64| (z0 * z0 - x * x).max(0.0).sqrt();
    let g = |x: f64| interior_ratio(l, x) - exterior_ratio(l, y(x));
    let mut edges = vec![0.0];
    edges.extend(bessel_zeros(l, z0));
    let mut levels = Vec::new();
    for (branch, &lo) in edges.iter().enumerate() {
        let hi = edges.get(branch + 1).copied().unwrap_or(z0);
        let closes_at_well_edge = branch + 1 == edges.len();
        if closes_at_well_edge && !(g(z0) > 0.0) {
            continue;
        }
        let x = bisect(g, lo, hi);
        levels.push(Level {
            nodes: branch as u32,
            l: Some(l),
            energy: x * x / (2.0 * mass * radius * radius) - v0,
            degeneracy: 2 * l + 1,
        });
    }
    levels
}

/// Levels of the spherical well for `l ≤ l_max`. With `None`, `l` increases
/// until an angular momentum has no bound state.
pub fn bound_states_radial(v0: f64, radius: f64, mass: f64, l_max: Option<u32>) -> LevelTable {
    let mut levels = Vec::new();
    let mut l = 0;
    loop {
        if let Some(max) = l_max {
            if l > max {
                break;
            }
        }
        let found = radial_levels_for_l(l, v0, radius, mass);
        if found.is_empty() && l_max.is_none() {
            break;
        }
        levels.extend(found);
        l += 1;
        if l > 200 {
            break;
        }
    }
    LevelTable::sorted(levels)
}

/// Pole-free radial matching residual, normalised by the size of its terms.
pub fn matching_residual_radial(level: &Level, v0: f64, radius: f64, mass: f64) -> f64 {
    let l = level.l.unwrap_or(0);
    let z0 = well_strength(v0, radius, mass);
    let x = ((level.energy + v0) * 2.0 * mass).sqrt() * radius;
    let y = (z0 * z0 - x * x).max(0.0).sqrt();
    let a = x * spherical_j(l + 1, x) * scaled_spherical_k(l, y);
    let b = y * scaled_spherical_k(l + 1, y) * spherical_j(l, x);
    (a - b) / (a.abs() + b.abs())
}

/// Levels for the geometry of `spec`.
pub fn levels_for(spec: &SystemSpec) -> Result<LevelTable, OracleError> {
    match spec.dimension {
        1 => Ok(bound_states_1d(spec.well_depth, spec.well_radius, spec.mass)),
        3 => Ok(bound_states_radial(spec.well_depth, spec.well_radius, spec.mass, None)),
        d => Err(OracleError::UnsupportedDimension(d)),
    }
}

/// Ground energy of `n` non-interacting spinless fermions.
pub fn fermi_ground_energy(levels: &LevelTable, n: usize) -> Result<f64, OracleError> {
    let available = levels.state_count();
    if available < n {
        return Err(OracleError::TooFewBoundStates {
            requested: n,
            available,
        });
    }
    let mut left = n;
    let mut total = 0.0;
    for lv in &levels.entries {
        let take = left.min(lv.degeneracy as usize);
        total += take as f64 * lv.energy;
        left -= take;
        if left == 0 {
            break;
        }
    }
    Ok(total)
}

fn single_particle_potential(r: &[f64], spec: &SystemSpec) -> f64 {
    let norm = r.iter().map(|c| c * c).sum::<f64>().sqrt();
    well_value(norm, spec)
}

/// `ln U(x^f, x^in; β)` for one particle with the potential at the midpoint.
fn ln_single_propagator(x_f: &[f64], x_in: &[f64], beta: f64, spec: &SystemSpec) -> f64 {
    let m = spec.mass;
    let d = x_f.len() as f64;
    let mut dist2 = 0.0;
    let mut mid = Vec::with_capacity(x_f.len());
    for (a, b) in x_f.iter().zip(x_in) {
        dist2 += (a - b) * (a - b);
        mid.push(0.5 * (a + b));
    }
    0.5 * d * (m / (2.0 * PI * beta)).ln() - m * dist2 / (2.0 * beta) - beta * single_particle_potential(&mid, spec)
}

/// `ln U^D(1,2)` and `ln U^D(2,1)` for two particles.
fn ln_direct_and_exchange(x_f: &[f64], x_in: &[f64], beta: f64, spec: &SystemSpec) -> (f64, f64) {
    let d = spec.dimension;
    let (f1, f2) = x_f.split_at(d);
    let (i1, i2) = x_in.split_at(d);
    let direct = ln_single_propagator(f1, i1, beta, spec) + ln_single_propagator(f2, i2, beta, spec);
    let exchange = ln_single_propagator(f2, i1, beta, spec) + ln_single_propagator(f1, i2, beta, spec);
    (direct, exchange)
}

/// Antisymmetrised two-particle propagator `U^D(1,2) - U^D(2,1)`.
///
/// Coordinates are `[particle 1 | particle 2]`, each of length `D`. The
/// single-particle potential is the square well of `spec`.
pub fn exact_two_fermion_propagator(x_f: &[f64], x_in: &[f64], beta: f64, spec: &SystemSpec) -> f64 {
    let (direct, exchange) = ln_direct_and_exchange(x_f, x_in, beta, spec);
    direct.exp() - exchange.exp()
}

/// `|U^F - U^D·(1 - e^{-S})| / |U^D|`, evaluated in log space.
pub fn factorization_error(x_f: &[f64], x_in: &[f64], beta: f64, spec: &SystemSpec) -> f64 {
    let (direct, exchange) = ln_direct_and_exchange(x_f, x_in, beta, spec);
    let mut two = spec.clone();
    two.n_particles = 2;
    let s = pauli_action(x_f, x_in, beta, &two);
    ((exchange - direct).exp() - (-s).exp()).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorizationRow {
    pub beta: f64,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorizationReport {
    pub rows: Vec<FactorizationRow>,
    /// Log-log slope of error against `β` over rows with nonzero error;
    /// `None` when fewer than two such rows exist.
    pub order: Option<f64>,
}

/// Random two-particle endpoint pairs that do not cross: both particles keep
/// their ordering along the step, so `S > 0`.
pub fn non_crossing_endpoints(count: usize, spec: &SystemSpec, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let d = spec.dimension;
    let span = 1.5 * spec.well_radius;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x_in: Vec<f64> = (0..2 * d).map(|_| rng.random_range(-span..span)).collect();
        let x_f: Vec<f64> = (0..2 * d).map(|_| rng.random_range(-span..span)).collect();
        let dot: f64 = (0..d).map(|a| (x_f[a] - x_f[d + a]) * (x_in[a] - x_in[d + a])).sum();
        if dot > 0.0 {
            out.push((x_f, x_in));
        }
    }
    out
}

/// Maximum factorisation error over the endpoint set for each `β`, and the
/// fitted convergence order.
pub fn pauli_factorization_error(
    betas: &[f64],
    endpoints: &[(Vec<f64>, Vec<f64>)],
    spec: &SystemSpec,
) -> FactorizationReport {
    let rows: Vec<FactorizationRow> = betas
        .iter()
        .map(|&beta| FactorizationRow {
            beta,
            max_rel_error: endpoints
                .iter()
                .map(|(f, i)| factorization_error(f, i, beta, spec))
                .fold(0.0, f64::max),
        })
        .collect();
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.max_rel_error > 0.0)
        .map(|r| (r.beta.ln(), r.max_rel_error.ln()))
        .collect();
    let order = (pts.len() >= 2).then(|| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        sxy / sxx
    });
    FactorizationReport { rows, order }
}
