//! NV-ensemble readout: sample field amplitude, accumulated NV phase and noisy shots.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::molecule::{boltzmann_factor, Environment, Molecule, Role};
use crate::sequence::SignalTrace;

/// Constants of the classical field-amplitude model, kept at the values that model quotes.
pub mod field_constants {
    pub const HBAR: f64 = 1.054e-34;
    pub const K_B: f64 = 1.38e-23;
    pub const MU0: f64 = 4.0 * std::f64::consts::PI * 1e-7;
    pub const GAMMA_H: f64 = 2.0 * std::f64::consts::PI * 42.57e6;
}

/// NV electron gyromagnetic ratio, rad s^-1 T^-1.
pub const GAMMA_E: f64 = 2.0 * PI * 28.025e9;

/// Minimum samples per RF period when synthesizing the field.
pub const MIN_SAMPLES_PER_PERIOD: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum ReadoutError {
    #[error("averaging count V = {0} is not positive; experiment time is shorter than the protocol")]
    NonPositiveAveraging(f64),
    #[error("{0} samples per period is below the minimum of {MIN_SAMPLES_PER_PERIOD}")]
    Undersampled(usize),
    #[error("invalid readout configuration: {0}")]
    Invalid(String),
}

fn default_photons() -> f64 {
    6.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutConfig {
    /// Hydrogen Rabi frequency Omega_H / 2pi.
    pub omega_hz: f64,
    pub t2_nv_s: f64,
    pub contrast: f64,
    pub t_exp_s: f64,
    pub rho_h_per_m3: f64,
    pub f3: f64,
    /// Effective detected photons per NV shot; sets the shot-noise floor.
    #[serde(default = "default_photons")]
    pub photons_per_shot: f64,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        Self {
            omega_hz: 20e3,
            t2_nv_s: 10e-6,
            contrast: 0.07,
            t_exp_s: 1e3,
            rho_h_per_m3: 6.6e28,
            f3: 4.1,
            photons_per_shot: default_photons(),
        }
    }
}

impl ReadoutConfig {
    pub fn validate(&self) -> Result<(), ReadoutError> {
        let bad = |m: &str| Err(ReadoutError::Invalid(m.to_string()));
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return bad("contrast must lie in (0, 1]");
        }
        if self.omega_hz.is_nan() || self.omega_hz <= 0.0 {
            return bad("omega_hz must be positive");
        }
        if self.t2_nv_s.is_nan() || self.t2_nv_s <= 0.0 {
            return bad("t2_nv_s must be positive");
        }
        if !(self.t_exp_s > 0.0 && self.photons_per_shot > 0.0) {
            return bad("t_exp_s and photons_per_shot must be positive");
        }
        Ok(())
    }

    /// Omega_H in rad/s.
    pub fn omega_h(&self) -> f64 {
        2.0 * PI * self.omega_hz
    }
}

/// Field amplitude B0 for the hydrogen-emitter constants; `expectation` is the
/// normalized polarization <2/N sum S_z> in [-1, 1].
pub fn b0_amplitude(env: &Environment, readout: &ReadoutConfig, expectation: f64) -> f64 {
    b0_amplitude_for(field_constants::GAMMA_H, env, readout, expectation)
}

/// B0 with the emitter's gyromagnetic ratio substituted for gamma_H.
pub fn b0_amplitude_for(gamma: f64, env: &Environment, readout: &ReadoutConfig, expectation: f64) -> f64 {
    use field_constants::*;
    (2.0 * PI).powi(2) * HBAR * HBAR * gamma.abs() * MU0 * readout.rho_h_per_m3 * env.b_tesla
        / (16.0 * PI * K_B * env.temperature_k)
        * readout.f3
        * expectation
}

/// (2 gamma_e gamma / Omega) x [1 - cos(pi T2nv Omega)]; linear in `expectation`.
pub fn nv_phase_factor(gamma_nuc: f64, omega: f64, t2_nv: f64, expectation: f64) -> f64 {
    2.0 * GAMMA_E * gamma_nuc.abs() / omega * expectation * (1.0 - (PI * t2_nv * omega).cos())
}

/// Who emits during detection, and how its expectation values are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmitterSpec {
    /// rad s^-1 T^-1
    pub gamma: f64,
    /// Rabi frequency in rad/s.
    pub omega: f64,
    pub count: usize,
    /// Emitter number density relative to the hydrogen density the field model assumes.
    pub density_fraction: f64,
    /// Polarization that maps to a normalized expectation of 1.
    pub polarization: f64,
}

impl EmitterSpec {
    /// Hydrogens driven at Omega_H.
    pub fn hydrogen(molecule: &Molecule, env: &Environment, readout: &ReadoutConfig) -> Self {
        Self::for_role(molecule, env, readout, Role::Hydrogen)
    }

    /// Prepolarized targets driven at the same B_RF as the hydrogens.
    pub fn target(molecule: &Molecule, env: &Environment, readout: &ReadoutConfig) -> Self {
        Self::for_role(molecule, env, readout, Role::Target)
    }

    pub fn for_role(molecule: &Molecule, env: &Environment, readout: &ReadoutConfig, role: Role) -> Self {
        let gamma_h = molecule
            .nuclei
            .iter()
            .find(|n| n.role == Role::Hydrogen)
            .map(|n| n.gamma)
            .unwrap_or(2.0 * PI * 42.6e6);
        let members: Vec<_> = molecule.nuclei.iter().filter(|n| n.role == role).collect();
        let gamma = members.first().map(|n| n.gamma).unwrap_or(gamma_h);
        let count = members.len().max(1);
        let hydrogens = molecule.hydrogens().len().max(1);
        Self {
            gamma,
            omega: readout.omega_h() * gamma.abs() / gamma_h.abs(),
            count,
            density_fraction: count as f64 / hydrogens as f64,
            polarization: boltzmann_factor(gamma_h, env),
        }
    }

    /// Duration of one +-2pi rotation.
    pub fn rotation_time(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// <2/N sum S_z> from a raw trace value, scaled by the emitter's share of the
    /// hydrogen density so that fewer emitters per molecule give a weaker field.
    pub fn normalize(&self, value: f64) -> f64 {
        self.density_fraction * value / (0.5 * self.count as f64 * self.polarization)
    }

    /// NV <sigma_y> per unit normalized expectation.
    pub fn gain(&self, env: &Environment, readout: &ReadoutConfig) -> f64 {
        let b0 = b0_amplitude_for(self.gamma, env, readout, 1.0);
        nv_phase_factor(self.gamma, self.omega, readout.t2_nv_s, b0)
    }
}

/// Noiseless NV signal <sigma_y> for each block.
pub fn expected_readout(trace: &SignalTrace, env: &Environment, readout: &ReadoutConfig, emitter: &EmitterSpec) -> Vec<f64> {
    let g = emitter.gain(env, readout);
    trace.values.iter().map(|&v| g * emitter.normalize(v)).collect()
}

/// Averaging count V = t_exp / (n x block duration).
pub fn averaging_count(readout: &ReadoutConfig, blocks: usize, block_duration: f64) -> Result<f64, ReadoutError> {
    let v = readout.t_exp_s / (blocks as f64 * block_duration);
    if !(v >= 1.0 && v.is_finite()) {
        return Err(ReadoutError::NonPositiveAveraging(v));
    }
    Ok(v)
}

/// Per-block shot-noise standard deviation 1 / (contrast sqrt(N_ph V M)).
pub fn noise_sigma(readout: &ReadoutConfig, blocks: usize, block_duration: f64, m: usize) -> Result<f64, ReadoutError> {
    let v = averaging_count(readout, blocks, block_duration)?;
    Ok(1.0 / (readout.contrast * (readout.photons_per_shot * v * m as f64).sqrt()))
}

/// Time spent per block and detections per block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionBudget {
    pub block_duration: f64,
    pub m: usize,
}

/// Noisy NV readout for each block; deterministic for a given seed and stream.
pub fn sample_readout(
    trace: &SignalTrace,
    env: &Environment,
    readout: &ReadoutConfig,
    emitter: &EmitterSpec,
    budget: &DetectionBudget,
    seed: u64,
    stream: u64,
) -> Result<SignalTrace, ReadoutError> {
    readout.validate()?;
    let sigma = noise_sigma(readout, trace.len(), budget.block_duration, budget.m)?;
    let mean = expected_readout(trace, env, readout, emitter);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let normal = Normal::new(0.0, sigma).map_err(|e| ReadoutError::Invalid(e.to_string()))?;
    let values = mean.iter().map(|&x| x + normal.sample(&mut rng)).collect();
    let mut out = SignalTrace::new(trace.times.clone(), values, trace.emitter);
    out.attenuation_applied = trace.attenuation_applied;
    Ok(out)
}

/// Time-domain field samples during detection windows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSamples {
    pub times: Vec<f64>,
    pub field: Vec<f64>,
    /// Detection-window start times, one per block.
    pub window_starts: Vec<f64>,
}

/// One +2pi/-2pi rotation pair per block: B0(k tau) gamma sin(Omega t), then its mirror.
pub fn synthesize_field(
    trace: &SignalTrace,
    env: &Environment,
    readout: &ReadoutConfig,
    emitter: &EmitterSpec,
    block_duration: f64,
    samples_per_period: usize,
) -> Result<FieldSamples, ReadoutError> {
    if samples_per_period < MIN_SAMPLES_PER_PERIOD {
        return Err(ReadoutError::Undersampled(samples_per_period));
    }
    let period = emitter.rotation_time();
    let dt = period / samples_per_period as f64;
    let mut out = FieldSamples { times: Vec::new(), field: Vec::new(), window_starts: Vec::new() };
    for (k, &v) in trace.values.iter().enumerate() {
        let amp = b0_amplitude_for(emitter.gamma, env, readout, emitter.normalize(v)) * emitter.gamma.abs();
        let start = k as f64 * block_duration;
        out.window_starts.push(start);
        for half in 0..2 {
            let sign = if half == 0 { 1.0 } else { -1.0 };
            for s in 0..samples_per_period {
                let local = s as f64 * dt;
                out.times.push(start + half as f64 * period + local);
                out.field.push(sign * amp * (emitter.omega * local).sin());
            }
        }
    }
    Ok(out)
}
