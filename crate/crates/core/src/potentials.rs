//! External potentials and the pairwise exchange weight.
//!
//! For a short imaginary-time step the antisymmetrised product of free
//! propagators factorises as `U^D(1,2)·(1 - e^{-S})`, where
//! `S = Σ_{k<l} m (x_k^f - x_l^f)·(x_k^in - x_l^in) / β`. The factor
//! `w = 1 - e^{-S}` is `e^{-βV^F}` for the effective exchange potential `V^F`.
//! It is positive when no pair changes its ordering along the step, zero at
//! coincidence, and negative (with magnitude that can exceed one) when a pair
//! crosses.

use serde::{Deserialize, Serialize};

use crate::model::{PotentialKind, SystemSpec};

/// Single-particle square-well value at distance `r` from the centre.
pub fn well_value(r: f64, spec: &SystemSpec) -> f64 {
    if r <= spec.well_radius {
        -spec.well_depth
    } else {
        0.0
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Physical potential summed over particles. Boundary `r = R` counts as inside.
pub fn well_potential(x: &[f64], spec: &SystemSpec) -> f64 {
    match spec.potential {
        PotentialKind::SquareWell => x
            .chunks_exact(spec.dimension)
            .map(|r| well_value(norm(r), spec))
            .sum(),
        PotentialKind::Trial => trial_potential(x, spec),
    }
}

/// `V_T(x) = m ω_T² |x|² / 2 + c_T`.
pub fn trial_potential(x: &[f64], spec: &SystemSpec) -> f64 {
    let r2: f64 = x.iter().map(|c| c * c).sum();
    0.5 * spec.mass * spec.trial_omega * spec.trial_omega * r2 + spec.trial_offset
}

/// Pairwise exchange action. Returns `+∞` for a single particle, which maps
/// to weight one.
pub fn pauli_action(x_f: &[f64], x_in: &[f64], beta: f64, spec: &SystemSpec) -> f64 {
    let n = spec.n_particles;
    if n < 2 {
        return f64::INFINITY;
    }
    let d = spec.dimension;
    let mut sum = 0.0;
    for k in 0..n {
        for l in (k + 1)..n {
            for a in 0..d {
                let df = x_f[k * d + a] - x_f[l * d + a];
                let di = x_in[k * d + a] - x_in[l * d + a];
                sum += df * di;
            }
        }
    }
    spec.mass * sum / beta
}

/// `w = 1 - e^{-S}` split into magnitude and phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PauliWeight {
    pub magnitude: f64,
    /// `0` or `π`.
    pub phase: f64,
    pub action: f64,
}

impl PauliWeight {
    pub fn from_action(action: f64) -> Self {
        let w = if action == f64::INFINITY {
            1.0
        } else {
            -(-action).exp_m1()
        };
        PauliWeight {
            magnitude: w.abs(),
            phase: if action < 0.0 { std::f64::consts::PI } else { 0.0 },
            action,
        }
    }

    pub fn value(&self) -> f64 {
        if self.phase == 0.0 {
            self.magnitude
        } else {
            -self.magnitude
        }
    }

    /// The pair ordering flipped during the step.
    pub fn is_crossing(&self) -> bool {
        self.action < 0.0
    }
}

pub fn pauli_weight(x_f: &[f64], x_in: &[f64], beta: f64, spec: &SystemSpec) -> PauliWeight {
    PauliWeight::from_action(pauli_action(x_f, x_in, beta, spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{E, PI};

    fn one_d(n: usize) -> SystemSpec {
        SystemSpec::square_well(n, 1, 3.5, 2.0)
    }

    #[test]
    fn nine_particles_inside() {
        let spec = SystemSpec::square_well(9, 3, 3.5, 2.0);
        let x: Vec<f64> = (0..27).map(|i| 0.1 * (i % 5) as f64).collect();
        assert_relative_eq!(well_potential(&x, &spec), -31.5);
    }

    #[test]
    fn outside_and_boundary() {
        let spec = SystemSpec::square_well(1, 3, 3.5, 2.0);
        assert_eq!(well_potential(&[3.0, 0.0, 0.0], &spec), 0.0);
        assert_eq!(well_potential(&[0.0, 2.0, 0.0], &spec), -3.5);
    }

    #[test]
    fn trial_potential_examples() {
        let mut spec = one_d(1);
        spec.trial_offset = -1.25;
        assert_eq!(trial_potential(&[0.0], &spec), -1.25);
        spec.trial_omega = 1.0;
        spec.trial_offset = 0.0;
        assert_eq!(trial_potential(&[2.0], &spec), 2.0);
        spec.trial_offset = 0.7;
        let x = [0.3];
        let x2 = [0.6];
        assert_relative_eq!(
            trial_potential(&x2, &spec) - 0.7,
            4.0 * (trial_potential(&x, &spec) - 0.7),
            max_relative = 1e-14
        );
    }

    #[test]
    fn trial_kind_mirrors_trial_potential() {
        let spec = SystemSpec::oscillator(2, 1, 1.0);
        let x = [0.4, -1.1];
        assert_eq!(well_potential(&x, &spec), trial_potential(&x, &spec));
    }

    #[test]
    fn action_examples() {
        let spec = one_d(2);
        assert_eq!(pauli_action(&[0.0, 1.0], &[0.0, 1.0], 1.0, &spec), 1.0);
        assert_eq!(pauli_action(&[1.0, 0.0], &[0.0, 1.0], 1.0, &spec), -1.0);
        let spec = one_d(3);
        assert_eq!(pauli_action(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0], 1.0, &spec), 6.0);
        assert_eq!(pauli_action(&[0.5], &[0.1], 1.0, &one_d(1)), f64::INFINITY);
    }

    #[test]
    fn weight_examples() {
        let w = PauliWeight::from_action(1.0);
        assert_relative_eq!(w.magnitude, 1.0 - (-1.0f64).exp(), max_relative = 1e-15);
        assert_eq!(w.phase, 0.0);
        let w = PauliWeight::from_action(-1.0);
        assert_relative_eq!(w.magnitude, E - 1.0, max_relative = 1e-15);
        assert_eq!(w.phase, PI);
        assert!(w.is_crossing());
        assert_relative_eq!(w.value(), 1.0 - E, max_relative = 1e-15);

        // Two particles meet at the end of the step.
        let w = pauli_weight(&[0.5, 0.5], &[0.0, 1.0], 0.1, &one_d(2));
        assert_eq!(w.action, 0.0);
        assert_eq!(w.magnitude, 0.0);
        let single = pauli_weight(&[0.3], &[0.0], 0.01, &one_d(1));
        assert_eq!((single.magnitude, single.phase), (1.0, 0.0));
    }

    mod props {
        use super::super::*;
        use crate::model::SystemSpec;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn swapping_final_pair_negates_action(
                a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, d in -3.0f64..3.0,
                beta in 1e-3f64..1.0,
            ) {
                let spec = SystemSpec::square_well(2, 1, 3.5, 2.0);
                let s = pauli_action(&[a, b], &[c, d], beta, &spec);
                let swapped = pauli_action(&[b, a], &[c, d], beta, &spec);
                prop_assert!((s + swapped).abs() <= 1e-12 * s.abs().max(1.0));
            }

            #[test]
            fn weight_increasing_in_action(s in -30.0f64..30.0, ds in 1e-6f64..5.0) {
                let lo = PauliWeight::from_action(s).value();
                let hi = PauliWeight::from_action(s + ds).value();
                prop_assert!(hi > lo);
                prop_assert!(hi <= 1.0);
            }
        }
    }
}
