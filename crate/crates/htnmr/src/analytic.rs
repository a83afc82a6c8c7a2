//! Closed-form emitter signal used as an oracle for the engine.
//!
//! Homonuclear hydrogen couplings are not part of this model, and with several
//! targets the even-order cross terms are left out; for one target it is exact.

use serde::Serialize;

use crate::molecule::{boltzmann_factor, classify_pair, Environment, Molecule, PairClass, Role};
use crate::sequence::{SequenceConfig, SignalTrace};

/// Fraction of the first-order amplitude above which higher orders are flagged.
pub const THIRD_ORDER_FLAG: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmplitudeBreakdown {
    /// sum_i sum_j sin^2(J_ij t/2) prod_{k != j} cos^2(J_ik t/2)
    pub first_order: f64,
    /// Triple-sine correction, reported separately.
    pub third_order: f64,
    /// First-order weight carried by each hydrogen (molecule order).
    pub per_hydrogen: Vec<f64>,
    /// w[i][j]: weight of hydrogen i through target j.
    pub weights: Vec<Vec<f64>>,
    /// sum_i prod_j cos^2(J_ij t/2): hydrogen polarization that never left the
    /// hydrogens. It returns as a constant offset and vanishes at the optimal t.
    pub residual: f64,
}

impl AmplitudeBreakdown {
    pub fn third_order_significant(&self) -> bool {
        self.third_order.abs() > THIRD_ORDER_FLAG * self.first_order.abs()
    }
}

/// C(k tau) for one target: product of cos(J_1j k tau / 2) over its non-hydrogen
/// partners, times cos(delta_1 k tau) when shifts are kept.
pub fn c_factor(molecule: &Molecule, ktau: f64, with_shifts: bool, target: usize) -> f64 {
    let env = molecule.environment;
    let mut c = 1.0;
    for j in molecule.non_hydrogens() {
        if j == target {
            continue;
        }
        if classify_pair(molecule, &env, target, j) == PairClass::Neq {
            c *= (molecule.coupling(target, j) * ktau / 2.0).cos();
        }
    }
    if with_shifts {
        c *= (molecule.nuclei[target].shift * ktau).cos();
    }
    c
}

fn half_angles(molecule: &Molecule, h: usize, targets: &[usize], t: f64) -> (Vec<f64>, Vec<f64>) {
    targets
        .iter()
        .map(|&j| {
            let a = molecule.coupling(h, j) * t / 2.0;
            (a.sin(), a.cos())
        })
        .unzip()
}

/// Transfer amplitude for a transfer time `t`.
pub fn general_amplitude(molecule: &Molecule, t: f64) -> AmplitudeBreakdown {
    let targets = molecule.targets();
    let nt = targets.len();
    let mut weights = Vec::new();
    let mut per_hydrogen = Vec::new();
    let mut third = 0.0;
    let mut residual = 0.0;
    for h in molecule.hydrogens() {
        let (s, c) = half_angles(molecule, h, &targets, t);
        residual += c.iter().map(|x| x * x).product::<f64>();
        let row: Vec<f64> = (0..nt)
            .map(|j| {
                let others: f64 = (0..nt).filter(|&k| k != j).map(|k| c[k] * c[k]).product();
                s[j] * s[j] * others
            })
            .collect();
        per_hydrogen.push(row.iter().sum());
        weights.push(row);
        for j in 0..nt {
            for p in j + 1..nt {
                for q in p + 1..nt {
                    let rest: f64 = (0..nt).filter(|&k| k != j && k != p && k != q).map(|k| c[k] * c[k]).product();
                    third += (s[j] * s[p] * s[q]).powi(2) * rest;
                }
            }
        }
    }
    AmplitudeBreakdown { first_order: per_hydrogen.iter().sum(), third_order: third, per_hydrogen, weights, residual }
}

fn hydrogen_boltzmann(molecule: &Molecule, env: &Environment) -> f64 {
    molecule
        .nuclei
        .iter()
        .find(|n| n.role == Role::Hydrogen)
        .map(|n| boltzmann_factor(n.gamma, env))
        .unwrap_or(0.0)
}

/// 1/2 B_H [residual - sum_ij w_ij C_j(k tau)], optionally with the triple-sine term.
pub fn oracle_trace(molecule: &Molecule, env: &Environment, config: &SequenceConfig, include_third: bool) -> SignalTrace {
    let targets = molecule.targets();
    let amp = general_amplitude(molecule, config.t_s);
    let b_h = hydrogen_boltzmann(molecule, env);
    let with_shifts = !config.pi_pulses;
    let mut times = Vec::with_capacity(config.n);
    let mut values = Vec::with_capacity(config.n);
    for k in 1..=config.n {
        let ktau = k as f64 * config.tau_s;
        let cs: Vec<f64> = targets.iter().map(|&j| c_factor(molecule, ktau, with_shifts, j)).collect();
        let mut total = -amp.residual;
        for row in &amp.weights {
            total += row.iter().zip(&cs).map(|(w, c)| w * c).sum::<f64>();
        }
        if include_third {
            total += third_order_signal(molecule, config.t_s, &cs);
        }
        times.push(ktau);
        values.push(-0.5 * b_h * total);
    }
    let mut trace = SignalTrace::new(times, values, Role::Hydrogen);
    if amp.third_order_significant() {
        trace.notes.push("third-order amplitude exceeds 10% of first order".into());
    }
    trace
}

fn third_order_signal(molecule: &Molecule, t: f64, cs: &[f64]) -> f64 {
    let targets = molecule.targets();
    let nt = targets.len();
    let mut total = 0.0;
    for h in molecule.hydrogens() {
        let (s, c) = half_angles(molecule, h, &targets, t);
        for j in 0..nt {
            for p in j + 1..nt {
                for q in p + 1..nt {
                    let rest: f64 = (0..nt).filter(|&k| k != j && k != p && k != q).map(|k| c[k] * c[k]).product();
                    total += (s[j] * s[p] * s[q]).powi(2) * rest * cs[j] * cs[p] * cs[q];
                }
            }
        }
    }
    total
}

/// Baseline oracle: -1/2 B_H sum_j C_j(k tau) with prepolarized targets.
pub fn standard_oracle_trace(molecule: &Molecule, env: &Environment, config: &SequenceConfig) -> SignalTrace {
    let targets = molecule.targets();
    let b_h = hydrogen_boltzmann(molecule, env);
    let (times, values) = (1..=config.n)
        .map(|k| {
            let ktau = k as f64 * config.tau_s;
            let c: f64 = targets.iter().map(|&j| c_factor(molecule, ktau, !config.pi_pulses, j)).sum();
            (ktau, -0.5 * b_h * c)
        })
        .unzip();
    SignalTrace::new(times, values, Role::Target)
}
