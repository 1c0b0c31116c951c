//! The modified Green's function Monte Carlo iteration.
//!
//! One generation applies the Laplace-transformed density matrix
//! `ρ̃ = ρ̃_T + Δ·K∗ρ̃` to every walker. Each walker takes a drift-diffusion
//! step over an exponentially sampled imaginary time `β` and then branches
//! twice:
//!
//! * direct copies, multiplicity `m_D·|w|`, go to the next generation;
//! * intermediate copies, multiplicity `|V_T - V|·m_D·|w|·Δ`, are stepped
//!   again by the same procedure until none remain.
//!
//! Every copy carries a phase. Signs of the guidance ratio, of the exchange
//! weight `w` and of the kernel `V_T - V` are all folded into it, so the
//! walker density follows `|Ψ Ψ_G|` while the signed population follows
//! `Ψ Ψ_G` itself.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::guidance::{self, cap_force};
use crate::model::{add_phase, Population, RunConfig, SystemSpec, Walker};
use crate::potentials::{pauli_weight, trial_potential, well_potential, PauliWeight};

pub type WalkerRng = Xoshiro256PlusPlus;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("population died out at generation {generation}")]
    Extinction { generation: usize },
    #[error("signed population vanished at generation {generation}")]
    SignCollapse { generation: usize },
    #[error("kernel too strong; decrease Δ or improve V_T (generation {generation})")]
    KernelTooStrong { generation: usize },
}

/// Per-generation diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepStats {
    pub generation: usize,
    pub energy_estimate: f64,
    pub signed_pop_before: f64,
    pub signed_pop_after: f64,
    pub abs_pop_after: usize,
    /// Killed points counted with their multiplicity.
    pub killed_weight: f64,
    /// Steps along which some pair changed ordering (`S < 0`).
    pub crossing_attempts: u64,
    pub intermediate_count: u64,
    pub mean_beta: f64,
    /// Drift-diffusion steps taken, direct and intermediate.
    pub moves: u64,
    /// Walkers dropped because they sat exactly on a guidance node.
    pub discarded: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a run seed with two stream coordinates.
pub fn derive_seed(seed: u64, generation: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ generation) ^ index)
}

/// Independent stream for one `(seed, generation, walker)` triple.
pub fn substream(seed: u64, generation: u64, index: u64) -> WalkerRng {
    WalkerRng::seed_from_u64(derive_seed(seed, generation, index))
}

/// Draws `size` walkers from `|Ψ_G|²` with single-particle Metropolis moves:
/// 500 thermalisation sweeps, then one sample every 10 sweeps.
pub fn sample_initial_generation<R: Rng + ?Sized>(spec: &SystemSpec, size: usize, rng: &mut R) -> Population {
    const THERMALISE: usize = 500;
    const STRIDE: usize = 10;
    let d = spec.dimension;
    let width = 1.0 / (spec.mass * spec.guidance_omega).sqrt();
    let step = 0.8 * width;
    let mut x: Vec<f64> = (0..spec.n_coords())
        .map(|_| width * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut log_psi = guidance::guidance_value(&x, spec).log_magnitude;
    let sweep = |x: &mut Vec<f64>, log_psi: &mut f64, rng: &mut R| {
        for p in 0..spec.n_particles {
            let old: Vec<f64> = x[p * d..(p + 1) * d].to_vec();
            for a in 0..d {
                x[p * d + a] += step * rng.sample::<f64, _>(StandardNormal);
            }
            let new_log = guidance::guidance_value(x, spec).log_magnitude;
            let accept = new_log > f64::NEG_INFINITY
                && (new_log >= *log_psi || rng.random::<f64>() < (2.0 * (new_log - *log_psi)).exp());
            if accept {
                *log_psi = new_log;
            } else {
                x[p * d..(p + 1) * d].copy_from_slice(&old);
            }
        }
    };
    for _ in 0..THERMALISE {
        sweep(&mut x, &mut log_psi, rng);
    }
    let mut walkers = Vec::with_capacity(size);
    while walkers.len() < size {
        for _ in 0..STRIDE {
            sweep(&mut x, &mut log_psi, rng);
        }
        walkers.push(Walker::new(x.clone()));
    }
    Population::new(walkers, 0)
}

/// `β ~ exp(-β/Δ)/Δ`.
pub fn sample_time_step<R: Rng + ?Sized>(delta: f64, rng: &mut R) -> f64 {
    Exp::new(1.0 / delta).expect("delta > 0").sample(rng)
}

/// `floor(m + U[0,1))`; saturates for multiplicities beyond `u64`.
pub fn stochastic_round<R: Rng + ?Sized>(m: f64, rng: &mut R) -> u64 {
    (m + rng.random::<f64>()).floor() as u64
}

/// Result of one drift-diffusion step.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    /// Walker at the new position, phase already updated.
    pub walker: Walker,
    /// Direct multiplicity `m_D` without the exchange factor.
    pub m_d: f64,
    pub pauli: PauliWeight,
    /// `0` or `π`: sign of `Ψ_G(x)/Ψ_G(x')`.
    pub guidance_phase: f64,
}

impl Propagation {
    /// `m_D·|w|`, the multiplicity used for branching.
    pub fn effective_multiplicity(&self) -> f64 {
        self.m_d * self.pauli.magnitude
    }
}

/// `ln m_D` for a step `x' → x`, given the guidance data at `x'` and the
/// drift used to generate `x`. Also returns the guidance sign change.
pub fn ln_direct_multiplicity(
    x: &[f64],
    x_prime: &[f64],
    drift: &[f64],
    log_psi_prime: f64,
    sign_prime: f64,
    beta: f64,
    spec: &SystemSpec,
    trial_energy: f64,
) -> (f64, f64) {
    let g = guidance::guidance_value(x, spec);
    if g.is_node() {
        return (f64::NEG_INFINITY, 0.0);
    }
    let ln_m = trial_energy * beta + g.log_magnitude - log_psi_prime
        + guidance::ln_trial_density_matrix(x, x_prime, beta, spec)
        - guidance::ln_drift_diffusion_density(x, x_prime, drift, beta, spec.mass);
    let phase = if g.sign_phase == sign_prime { 0.0 } else { PI };
    (ln_m, phase)
}

/// One drift-diffusion step. `None` when the walker sits exactly on a node
/// of `Ψ_G`, where the guidance ratio is undefined.
pub fn propagate_walker<R: Rng + ?Sized>(
    walker: &Walker,
    beta: f64,
    spec: &SystemSpec,
    trial_energy: f64,
    rng: &mut R,
) -> Option<Propagation> {
    let start = guidance::evaluate(&walker.coords, spec).ok()?;
    let mut drift = start.force;
    cap_force(&mut drift, beta, spec.mass);
    let sigma = (beta / spec.mass).sqrt();
    let x: Vec<f64> = walker
        .coords
        .iter()
        .zip(&drift)
        .map(|(c, f)| c + beta * f + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let (ln_m, guidance_phase) = ln_direct_multiplicity(
        &x,
        &walker.coords,
        &drift,
        start.value.log_magnitude,
        start.value.sign_phase,
        beta,
        spec,
        trial_energy,
    );
    let pauli = pauli_weight(&x, &walker.coords, beta, spec);
    let phase = add_phase(add_phase(walker.phase, guidance_phase), pauli.phase);
    Some(Propagation {
        walker: Walker { coords: x, phase },
        m_d: ln_m.exp(),
        pauli,
        guidance_phase,
    })
}

/// Intermediate multiplicity `|V_T(x) - V(x)|·m_D·Δ` and the kernel phase.
pub fn intermediate_multiplicity(x: &[f64], m_d: f64, spec: &SystemSpec, delta: f64) -> (f64, f64) {
    let kernel = trial_potential(x, spec) - well_potential(x, spec);
    let phase = if kernel < 0.0 { PI } else { 0.0 };
    (kernel.abs() * m_d * delta, phase)
}

/// `E₀ = E_T + (P_{n-1}/P_n - 1)/Δ`. `None` when `p_curr = 0`.
pub fn energy_estimate(p_prev: f64, p_curr: f64, delta: f64, trial_energy: f64) -> Option<f64> {
    (p_curr != 0.0).then(|| trial_energy + (p_prev / p_curr - 1.0) / delta)
}

#[derive(Default)]
struct Outcome {
    children: Vec<Walker>,
    killed: f64,
    crossings: u64,
    intermediates: u64,
    moves: u64,
    beta_sum: f64,
    discarded: u64,
}

fn push_copies(out: &mut Vec<Walker>, w: &Walker, count: u64) {
    for _ in 0..count {
        out.push(w.clone());
    }
}

/// Runs one walker and all of its intermediate descendants.
fn process_walker(root: &Walker, spec: &SystemSpec, cfg: &RunConfig, rng: &mut WalkerRng) -> Option<Outcome> {
    let limit = 100 * cfg.target_population;
    let m_max = cfg.m_max as u64;
    let mut out = Outcome::default();
    let mut queue = vec![root.clone()];
    while let Some(w) = queue.pop() {
        let beta = sample_time_step(cfg.delta, rng);
        let Some(step) = propagate_walker(&w, beta, spec, cfg.trial_energy, rng) else {
            out.discarded += 1;
            continue;
        };
        out.moves += 1;
        out.beta_sum += beta;
        if step.pauli.is_crossing() {
            out.crossings += 1;
        }
        let eff = step.effective_multiplicity();

        let n_direct = stochastic_round(eff, rng);
        if n_direct > m_max {
            out.killed += n_direct as f64;
        } else {
            push_copies(&mut out.children, &step.walker, n_direct);
        }

        let (m_i, phase_k) = intermediate_multiplicity(&step.walker.coords, eff, spec, cfg.delta);
        let n_inter = stochastic_round(m_i, rng);
        if n_inter > m_max {
            out.killed += n_inter as f64;
        } else if n_inter > 0 {
            let inter = Walker {
                coords: step.walker.coords.clone(),
                phase: add_phase(step.walker.phase, phase_k),
            };
            push_copies(&mut queue, &inter, n_inter);
            out.intermediates += n_inter;
            if queue.len() > limit {
                return None;
            }
        }
    }
    Some(out)
}

/// Applies the sampled density matrix once to every walker.
pub fn advance_generation(
    pop: &Population,
    spec: &SystemSpec,
    cfg: &RunConfig,
) -> Result<(Population, StepStats), EngineError> {
    let generation = pop.generation() + 1;
    if pop.is_empty() {
        return Err(EngineError::Extinction {
            generation: pop.generation(),
        });
    }
    let outcomes: Vec<Option<Outcome>> = pop
        .walkers()
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let mut rng = substream(cfg.seed, generation as u64, i as u64);
            process_walker(w, spec, cfg, &mut rng)
        })
        .collect();

    let mut walkers = Vec::with_capacity(pop.abs_count());
    let mut total = Outcome::default();
    for o in outcomes {
        let o = o.ok_or(EngineError::KernelTooStrong { generation })?;
        walkers.extend(o.children);
        total.killed += o.killed;
        total.crossings += o.crossings;
        total.intermediates += o.intermediates;
        total.moves += o.moves;
        total.beta_sum += o.beta_sum;
        total.discarded += o.discarded;
    }
    let next = Population::new(walkers, generation);
    if next.is_empty() {
        return Err(EngineError::Extinction { generation });
    }
    let energy = energy_estimate(pop.signed_count(), next.signed_count(), cfg.delta, cfg.trial_energy)
        .ok_or(EngineError::SignCollapse { generation })?;
    let stats = StepStats {
        generation,
        energy_estimate: energy,
        signed_pop_before: pop.signed_count(),
        signed_pop_after: next.signed_count(),
        abs_pop_after: next.abs_count(),
        killed_weight: total.killed,
        crossing_attempts: total.crossings,
        intermediate_count: total.intermediates,
        mean_beta: if total.moves > 0 {
            total.beta_sum / total.moves as f64
        } else {
            0.0
        },
        moves: total.moves,
        discarded: total.discarded,
    };
    Ok((next, stats))
}

/// Rescales the population towards `target` by giving every walker the same
/// multiplicity `target/size`. The per-walker factor is uniform, so the ratio
/// of consecutive signed populations inside the next generation is
/// unaffected in expectation.
pub fn resample_population(pop: Population, target: usize, seed: u64) -> Population {
    let generation = pop.generation();
    let factor = target as f64 / pop.abs_count() as f64;
    let mut rng = substream(seed, generation as u64, u64::MAX);
    let mut walkers = Vec::with_capacity(target + target / 4);
    for w in pop.into_walkers() {
        let n = stochastic_round(factor, &mut rng);
        push_copies(&mut walkers, &w, n);
    }
    Population::new(walkers, generation)
}
