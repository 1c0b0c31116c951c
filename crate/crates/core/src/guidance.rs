//! Guidance function, quantum force and the two short-time kernels.
//!
//! The guidance function is a Slater determinant of Cartesian oscillator
//! orbitals at frequency `ω_G`. Each orbital is a normalised Hermite
//! polynomial times a Gaussian; the Gaussians factor out of the determinant,
//! so it is evaluated as `exp(-Σ ξ²/2) · det P` with `P` the polynomial
//! matrix. That keeps far-out walkers from underflowing.

use std::f64::consts::{LN_2, PI};

use thiserror::Error;

use crate::model::{OrbitalIndex, SystemSpec};

/// The configuration lies exactly on a node of the guidance function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("configuration lies on a node of the guidance function")]
pub struct AtNode;

/// `|Ψ_G(x)|` and its sign, plus the log-magnitude used internally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceValue {
    pub magnitude: f64,
    /// `0` or `π`; `0` by convention when the magnitude vanishes.
    pub sign_phase: f64,
    pub log_magnitude: f64,
}

impl GuidanceValue {
    pub fn sign(&self) -> f64 {
        if self.sign_phase == 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn is_node(&self) -> bool {
        self.magnitude == 0.0 && self.log_magnitude == f64::NEG_INFINITY
    }
}

/// Normalised Hermite polynomials `h_n(ξ) = H_n(ξ)/√(2ⁿ n!)` for `n ≤ n_max`.
fn hermite_table(xi: f64, n_max: usize, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if n_max == 0 {
        return;
    }
    out.push(std::f64::consts::SQRT_2 * xi);
    for n in 1..n_max {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * xi * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
        out.push(next);
    }
}

fn ln_gaussian_norm(mass: f64, omega: f64) -> f64 {
    0.25 * (mass * omega / PI).ln()
}

/// Product oscillator orbital at frequency `ω_G`, normalised to one.
pub fn orbital_value(idx: &OrbitalIndex, r: &[f64], spec: &SystemSpec) -> f64 {
    let scale = (spec.mass * spec.guidance_omega).sqrt();
    let norm = ln_gaussian_norm(spec.mass, spec.guidance_omega).exp();
    let mut table = Vec::new();
    idx.iter()
        .zip(r)
        .map(|(&n, &x)| {
            let xi = scale * x;
            hermite_table(xi, n as usize, &mut table);
            norm * table[n as usize] * (-0.5 * xi * xi).exp()
        })
        .product()
}

/// LU factorisation with partial pivoting of a dense row-major matrix.
struct Lu {
    n: usize,
    a: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    /// Returns `None` when an exact zero pivot is met.
    fn factor(mut a: Vec<f64>, n: usize) -> Option<Lu> {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
                .unwrap();
            if a[p * n + k] == 0.0 {
                return None;
            }
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = a[k * n + k];
            for i in (k + 1)..n {
                let f = a[i * n + k] / pivot;
                a[i * n + k] = f;
                for c in (k + 1)..n {
                    a[i * n + c] -= f * a[k * n + c];
                }
            }
        }
        Some(Lu { n, a, perm, sign })
    }

    fn log_det(&self) -> (f64, f64) {
        let mut log = 0.0;
        let mut sign = self.sign;
        for k in 0..self.n {
            let u = self.a[k * self.n + k];
            log += u.abs().ln();
            if u < 0.0 {
                sign = -sign;
            }
        }
        (log, sign)
    }

    /// Row-major inverse.
    fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            for i in 0..n {
                col[i] = if self.perm[i] == j { 1.0 } else { 0.0 };
            }
            for i in 0..n {
                for k in 0..i {
                    col[i] -= self.a[i * n + k] * col[k];
                }
            }
            for i in (0..n).rev() {
                for k in (i + 1)..n {
                    col[i] -= self.a[i * n + k] * col[k];
                }
                col[i] /= self.a[i * n + i];
            }
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        inv
    }
}

/// Polynomial parts of the Slater matrix and, optionally, their
/// derivatives with respect to each scaled coordinate.
struct SlaterParts {
    poly: Vec<f64>,
    /// `dpoly[(i*n + j)*d + a] = ∂P_ij/∂ξ_{i,a}`.
    dpoly: Vec<f64>,
    gauss_log: f64,
}

fn slater_parts(x: &[f64], spec: &SystemSpec, with_derivs: bool) -> SlaterParts {
    let n = spec.n_particles;
    let d = spec.dimension;
    let scale = (spec.mass * spec.guidance_omega).sqrt();
    let n_max = spec
        .guidance_orbitals
        .iter()
        .flat_map(|o| o.iter().copied())
        .max()
        .unwrap_or(0) as usize;

    // h_k(ξ_{i,a}) for every particle/axis.
    let mut tables = vec![0.0; n * d * (n_max + 1)];
    let mut buf = Vec::with_capacity(n_max + 1);
    let mut gauss_log = 0.0;
    for (c, &xc) in x.iter().enumerate() {
        let xi = scale * xc;
        gauss_log -= 0.5 * xi * xi;
        hermite_table(xi, n_max, &mut buf);
        tables[c * (n_max + 1)..(c + 1) * (n_max + 1)].copy_from_slice(&buf);
    }
    let h = |i: usize, a: usize, k: u32| tables[(i * d + a) * (n_max + 1) + k as usize];
    let dh = |i: usize, a: usize, k: u32| {
        if k == 0 {
            0.0
        } else {
            (2.0 * k as f64).sqrt() * h(i, a, k - 1)
        }
    };

    let mut poly = vec![0.0; n * n];
    let mut dpoly = if with_derivs { vec![0.0; n * n * d] } else { Vec::new() };
    for i in 0..n {
        for (j, orb) in spec.guidance_orbitals.iter().enumerate() {
            let factors: Vec<f64> = (0..d).map(|a| h(i, a, orb[a])).collect();
            poly[i * n + j] = factors.iter().product();
            if with_derivs {
                for a in 0..d {
                    let others: f64 = (0..d).filter(|&b| b != a).map(|b| factors[b]).product();
                    dpoly[(i * n + j) * d + a] = dh(i, a, orb[a]) * others;
                }
            }
        }
    }
    SlaterParts {
        poly,
        dpoly,
        gauss_log,
    }
}

fn ln_prefactor(spec: &SystemSpec) -> f64 {
    spec.n_particles as f64 * spec.dimension as f64 * ln_gaussian_norm(spec.mass, spec.guidance_omega)
}

fn value_from(log_det: f64, sign: f64, parts_gauss: f64, spec: &SystemSpec) -> GuidanceValue {
    let log_magnitude = log_det + parts_gauss + ln_prefactor(spec);
    GuidanceValue {
        magnitude: log_magnitude.exp(),
        sign_phase: if sign < 0.0 { PI } else { 0.0 },
        log_magnitude,
    }
}

const NODE: GuidanceValue = GuidanceValue {
    magnitude: 0.0,
    sign_phase: 0.0,
    log_magnitude: f64::NEG_INFINITY,
};

/// Value of the Slater determinant `det[φ_j(r_i)]`.
pub fn guidance_value(x: &[f64], spec: &SystemSpec) -> GuidanceValue {
    let parts = slater_parts(x, spec, false);
    match Lu::factor(parts.poly, spec.n_particles) {
        Some(lu) => {
            let (log_det, sign) = lu.log_det();
            value_from(log_det, sign, parts.gauss_log, spec)
        }
        None => NODE,
    }
}

/// Guidance value together with the uncapped quantum force.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceEval {
    pub value: GuidanceValue,
    pub force: Vec<f64>,
}

/// Evaluates `Ψ_G` and `F = (1/m) ∇ ln|Ψ_G|` with one factorisation.
pub fn evaluate(x: &[f64], spec: &SystemSpec) -> Result<GuidanceEval, AtNode> {
    let n = spec.n_particles;
    let d = spec.dimension;
    let parts = slater_parts(x, spec, true);
    let lu = Lu::factor(parts.poly, n).ok_or(AtNode)?;
    let (log_det, sign) = lu.log_det();
    let value = value_from(log_det, sign, parts.gauss_log, spec);
    if !value.log_magnitude.is_finite() {
        return Err(AtNode);
    }
    let inv = lu.inverse();
    let scale = (spec.mass * spec.guidance_omega).sqrt();
    let mut force = vec![0.0; n * d];
    for i in 0..n {
        for a in 0..d {
            // ∂ ln det P / ∂ξ_{i,a} = Σ_j (P⁻¹)_{j,i} ∂P_{i,j}/∂ξ_{i,a}
            let mut g = 0.0;
            for j in 0..n {
                g += inv[j * n + i] * parts.dpoly[(i * n + j) * d + a];
            }
            let c = i * d + a;
            let grad = scale * g - spec.mass * spec.guidance_omega * x[c];
            force[c] = grad / spec.mass;
        }
    }
    Ok(GuidanceEval { value, force })
}

/// `F_i = (1/m) Ψ_G⁻¹ ∂Ψ_G/∂x_i`, uncapped.
pub fn quantum_force(x: &[f64], spec: &SystemSpec) -> Result<Vec<f64>, AtNode> {
    evaluate(x, spec).map(|e| e.force)
}

/// Component-wise bound on the drift, one diffusion length per step.
pub fn force_cap(beta: f64, mass: f64) -> f64 {
    2.0 / (beta * mass).sqrt()
}

pub fn cap_force(force: &mut [f64], beta: f64, mass: f64) {
    let cap = force_cap(beta, mass);
    for f in force {
        *f = f.clamp(-cap, cap);
    }
}

/// Quantum force clamped for a step of length `beta`.
pub fn capped_quantum_force(x: &[f64], beta: f64, spec: &SystemSpec) -> Result<Vec<f64>, AtNode> {
    let mut f = quantum_force(x, spec)?;
    cap_force(&mut f, beta, spec.mass);
    Ok(f)
}

/// `ln sinh y` for `y > 0` without overflow.
fn ln_sinh(y: f64) -> f64 {
    y + (-(-2.0 * y).exp_m1()).ln() - LN_2
}

/// `ln ρ_T(x, x', β)` for the trial oscillator.
pub fn ln_trial_density_matrix(x: &[f64], x_prime: &[f64], beta: f64, spec: &SystemSpec) -> f64 {
    let m = spec.mass;
    let w = spec.trial_omega;
    let y = w * beta;
    let dims = x.len() as f64;
    let csch = if y > 350.0 {
        0.0
    } else {
        1.0 / y.sinh()
    };
    let tanh_half = (0.5 * y).tanh();
    let mut diff2 = 0.0;
    let mut sum2 = 0.0;
    for (a, b) in x.iter().zip(x_prime) {
        diff2 += (a - b) * (a - b);
        sum2 += a * a + b * b;
    }
    // (x²+x'²)coth y - 2x·x'/sinh y = |x-x'|²/sinh y + (x²+x'²) tanh(y/2)
    let quad = diff2 * csch + sum2 * tanh_half;
    0.5 * dims * ((m * w / (2.0 * PI)).ln() - ln_sinh(y)) - 0.5 * m * w * quad - spec.trial_offset * beta
}

/// Harmonic-oscillator imaginary-time kernel with offset `c_T`.
pub fn trial_density_matrix(x: &[f64], x_prime: &[f64], beta: f64, spec: &SystemSpec) -> f64 {
    ln_trial_density_matrix(x, x_prime, beta, spec).exp()
}

/// `ln ρ_D` for a Gaussian step centred on `x' + β·drift`.
pub fn ln_drift_diffusion_density(x: &[f64], x_prime: &[f64], drift: &[f64], beta: f64, mass: f64) -> f64 {
    let dims = x.len() as f64;
    let r2: f64 = x
        .iter()
        .zip(x_prime)
        .zip(drift)
        .map(|((a, b), f)| {
            let u = a - b - beta * f;
            u * u
        })
        .sum();
    0.5 * dims * (mass / (2.0 * PI * beta)).ln() - mass * r2 / (2.0 * beta)
}

/// Drift-diffusion proposal density, using the capped force at `x'`.
pub fn drift_diffusion_density(x: &[f64], x_prime: &[f64], beta: f64, spec: &SystemSpec) -> Result<f64, AtNode> {
    let drift = capped_quantum_force(x_prime, beta, spec)?;
    Ok(ln_drift_diffusion_density(x, x_prime, &drift, beta, spec.mass).exp())
}
