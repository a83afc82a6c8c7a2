//! Sensitivity calculus: effective coherence times, eta for each protocol, their
//! ratio, optimal detection counts and the T2nv sweep.

use serde::Serialize;

use crate::analytic;
use crate::molecule::{Environment, Molecule, Role};
use crate::readout::{EmitterSpec, ReadoutConfig};
use crate::sequence::SequenceConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Hydrogen transfer with hydrogen emitters.
    Ours,
    /// Direct interrogation of the prepolarized target.
    Standard,
}

/// T2eff^H = T2H T21 tau / ((2t + M t_H) T21 + tau T2H).
pub fn t2_eff_hydrogen(t2_h: f64, t2_1: f64, t: f64, tau: f64, m: usize, t_h: f64) -> f64 {
    t2_h * t2_1 * tau / ((2.0 * t + m as f64 * t_h) * t2_1 + tau * t2_h)
}

/// T2eff^1 = T21 tau / (tau + M1 t1).
pub fn t2_eff_direct(t2_1: f64, tau: f64, m1: usize, t1: f64) -> f64 {
    t2_1 * tau / (tau + m1 as f64 * t1)
}

/// Inputs of the sensitivity comparison. Angular quantities are in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityParams {
    pub t: f64,
    pub tau: f64,
    pub n: usize,
    pub m: usize,
    pub m1: usize,
    /// One +-2pi hydrogen rotation.
    pub t_h: f64,
    /// One +-2pi target rotation.
    pub t1: f64,
    pub t2_h: f64,
    /// T2 or T2* of the target, depending on pi pulses.
    pub t2_1: f64,
    pub gamma_h: f64,
    pub gamma_1: f64,
    pub readout: ReadoutConfig,
    /// Transfer amplitude; `None` leaves the ratio undivided.
    pub amplitude_factor: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum SensitivityError {
    #[error("molecule lacks a {0:?} nucleus")]
    MissingRole(Role),
    #[error("no relaxation times listed for species `{0}`")]
    MissingRelaxation(String),
}

impl SensitivityParams {
    /// Parameters for a molecule and a transfer-protocol configuration, with detection
    /// units of one Rabi period on each channel at equal B_RF. `m1` is set equal to `m`
    /// until optimized.
    pub fn for_molecule(
        molecule: &Molecule,
        env: &Environment,
        config: &SequenceConfig,
        readout: &ReadoutConfig,
    ) -> Result<Self, SensitivityError> {
        let h = *molecule.hydrogens().first().ok_or(SensitivityError::MissingRole(Role::Hydrogen))?;
        let tg = *molecule.targets().first().ok_or(SensitivityError::MissingRole(Role::Target))?;
        let relax = |species: &str| {
            molecule
                .relaxation(species)
                .ok_or_else(|| SensitivityError::MissingRelaxation(species.to_string()))
        };
        let rh = relax(&molecule.nuclei[h].species)?;
        let r1 = relax(&molecule.nuclei[tg].species)?;
        let eh = EmitterSpec::hydrogen(molecule, env, readout);
        let e1 = EmitterSpec::target(molecule, env, readout);
        let amp = analytic::general_amplitude(molecule, config.t_s).first_order;
        Ok(Self {
            t: config.t_s,
            tau: config.tau_s,
            n: config.n,
            m: config.m,
            m1: config.m,
            t_h: eh.rotation_time(),
            t1: e1.rotation_time(),
            t2_h: rh.t2_s,
            t2_1: if config.pi_pulses { r1.t2_s } else { r1.t2_star_s },
            gamma_h: molecule.nuclei[h].gamma,
            gamma_1: molecule.nuclei[tg].gamma,
            readout: readout.clone(),
            amplitude_factor: Some(amp),
        })
    }

    pub fn omega_h(&self) -> f64 {
        self.readout.omega_h()
    }

    /// Omega_1 = Omega_H |gamma_1| / |gamma_H| (equal B_RF).
    pub fn omega_1(&self) -> f64 {
        self.omega_h() * self.gamma_1.abs() / self.gamma_h.abs()
    }

    /// 2t + tau + M t_H.
    pub fn block_duration_ours(&self) -> f64 {
        2.0 * self.t + self.tau + self.m as f64 * self.t_h
    }

    /// tau + M1 t1.
    pub fn block_duration_standard(&self) -> f64 {
        self.tau + self.m1 as f64 * self.t1
    }

    /// A_1 / A_H, the NV phase per unit expectation for each emitter.
    pub fn amplitude_ratio(&self) -> f64 {
        let t2nv = self.readout.t2_nv_s;
        let cos_h = 1.0 - (std::f64::consts::PI * t2nv * self.omega_h()).cos();
        let cos_1 = 1.0 - (std::f64::consts::PI * t2nv * self.omega_1()).cos();
        (self.gamma_1.abs() / self.gamma_h.abs()) * cos_1 / cos_h
    }
}

pub fn t2_eff(protocol: Protocol, p: &SensitivityParams) -> f64 {
    match protocol {
        Protocol::Ours => t2_eff_hydrogen(p.t2_h, p.t2_1, p.t, p.tau, p.m, p.t_h),
        Protocol::Standard => t2_eff_direct(p.t2_1, p.tau, p.m1, p.t1),
    }
}

/// Each protocol's eta up to the shared constant and its own signal amplitude:
/// sqrt(block / M) / (T2eff (1 - exp(-n tau / T2eff))).
pub fn eta_unscaled(protocol: Protocol, p: &SensitivityParams) -> f64 {
    let t2 = t2_eff(protocol, p);
    let (block, m) = match protocol {
        Protocol::Ours => (p.block_duration_ours(), p.m),
        Protocol::Standard => (p.block_duration_standard(), p.m1),
    };
    let attenuation = 1.0 - (-(p.n as f64) * p.tau / t2).exp();
    (block / m as f64).sqrt() / (t2 * attenuation)
}

/// eta_H / eta_1 with both protocols sharing tau and n.
pub fn eta_ratio(p: &SensitivityParams) -> f64 {
    let ratio = eta_unscaled(Protocol::Ours, p) / eta_unscaled(Protocol::Standard, p) * p.amplitude_ratio();
    match p.amplitude_factor {
        Some(a) if a != 0.0 => ratio / a,
        _ => ratio,
    }
}

/// Grid search of each protocol's own eta over M in [1, m_max]; ties go to smaller M.
pub fn optimize_measurements(p: &SensitivityParams, m_max: usize) -> (usize, usize) {
    let best = |protocol: Protocol| {
        let mut q = p.clone();
        let mut arg = 1;
        let mut val = f64::INFINITY;
        for m in 1..=m_max.max(1) {
            match protocol {
                Protocol::Ours => q.m = m,
                Protocol::Standard => q.m1 = m,
            }
            let e = eta_unscaled(protocol, &q);
            if e < val {
                val = e;
                arg = m;
            }
        }
        arg
    };
    (best(Protocol::Ours), best(Protocol::Standard))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub t2_eff_h: f64,
    pub t2_eff_1: f64,
    pub eta_ratio: f64,
    pub snr_ratio_pred: f64,
    pub m: usize,
    pub m1: usize,
    pub optimal_m: usize,
    pub optimal_m1: usize,
    pub amplitude_ratio: f64,
    pub amplitude_factor: Option<f64>,
    /// Monte Carlo SNR ratio, when a simulation was run.
    pub snr_ratio_measured: Option<f64>,
}

/// Evaluates the ratio at the parameters' own M, M1 and reports the optimal counts.
pub fn report(p: &SensitivityParams, m_max: usize) -> SensitivityReport {
    let (optimal_m, optimal_m1) = optimize_measurements(p, m_max);
    let eta = eta_ratio(p);
    SensitivityReport {
        t2_eff_h: t2_eff(Protocol::Ours, p),
        t2_eff_1: t2_eff(Protocol::Standard, p),
        eta_ratio: eta,
        snr_ratio_pred: 1.0 / eta,
        m: p.m,
        m1: p.m1,
        optimal_m,
        optimal_m1,
        amplitude_ratio: p.amplitude_ratio(),
        amplitude_factor: p.amplitude_factor,
        snr_ratio_measured: None,
    }
}

/// Copy of `p` with M and M1 replaced by their optima.
pub fn with_optimal_counts(p: &SensitivityParams, m_max: usize) -> SensitivityParams {
    let (m, m1) = optimize_measurements(p, m_max);
    SensitivityParams { m, m1, ..p.clone() }
}

/// eta ratio versus T2nv, re-optimizing M and M1 at each point.
pub fn sweep_t2nv(p: &SensitivityParams, grid: &[f64], m_max: usize) -> Vec<(f64, f64)> {
    grid.iter()
        .map(|&t2nv| {
            let mut q = p.clone();
            q.readout.t2_nv_s = t2nv;
            let q = with_optimal_counts(&q, m_max);
            (t2nv, eta_ratio(&q))
        })
        .collect()
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}
