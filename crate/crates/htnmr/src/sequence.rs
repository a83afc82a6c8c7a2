//! Pulse-sequence engine for the hydrogen-transfer protocol and the direct baseline.
//!
//! A run consists of an initial transfer stage, then `n` blocks of
//! loading (tau), transfer (t), detection (M rotation pairs) and transfer rewind.
//! The emitter signal is sampled after the block's transfer stage.
//!
//! Transfer stages are R_y(pi/2) on hydrogens and targets, free evolution under
//! the refocused Hamiltonian for `t`, then R_y(pi/2) again. In effective mode the
//! refocused Hamiltonian is built directly; explicit mode evolves the full RWA
//! Hamiltonian and inserts the pi pulses that do the refocusing.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic;
use crate::molecule::{
    boltzmann_factor, classify_pair, polarized_state, Environment, Molecule, MoleculeError, PairClass, Role,
};
use crate::sensitivity;
use crate::spin::{rotate_sites, trace_product, Axis, CMatrix, Eigensystem, SpinError, SpinOperator};
use crate::Real;

/// Largest register explicit-pulse mode accepts.
pub const EXPLICIT_MAX_SPINS: usize = 4;

#[derive(Debug, Error)]
pub enum SequenceError {
    #[error(transparent)]
    Spin(#[from] SpinError),
    #[error(transparent)]
    Molecule(#[from] MoleculeError),
    #[error("molecule has no hydrogen")]
    NoHydrogen,
    #[error("molecule has no target nucleus")]
    NoTarget,
    #[error("explicit-pulse mode supports at most {EXPLICIT_MAX_SPINS} spins, got {0}")]
    ScaleGuard(usize),
    #[error("dephasing was already applied to this trace")]
    AlreadyAttenuated,
    #[error("no relaxation times listed for species `{0}`")]
    MissingRelaxation(String),
    #[error("invalid sequence configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EngineMode {
    #[default]
    Effective,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Transfer,
    Loading,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Rewind,
}

fn default_true() -> bool {
    true
}

/// Protocol timings. For a baseline run, `m` and `t_rf_s` refer to the target channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceConfig {
    /// Transfer time t.
    pub t_s: f64,
    /// Loading time tau.
    pub tau_s: f64,
    /// Number of blocks.
    pub n: usize,
    /// Detections per block.
    pub m: usize,
    /// Duration of one +-2pi rotation.
    pub t_rf_s: f64,
    #[serde(default = "default_true")]
    pub pi_pulses: bool,
    #[serde(default)]
    pub mode: EngineMode,
    /// Keep hydrogen-hydrogen couplings in the effective Hamiltonians.
    #[serde(default = "default_true")]
    pub homonuclear: bool,
}

impl SequenceConfig {
    pub fn new(t_s: f64, tau_s: f64, n: usize, m: usize, t_rf_s: f64) -> Self {
        Self { t_s, tau_s, n, m, t_rf_s, pi_pulses: true, mode: EngineMode::Effective, homonuclear: true }
    }

    pub fn validate(&self) -> Result<(), SequenceError> {
        let bad = |msg: &str| Err(SequenceError::InvalidConfig(msg.to_string()));
        if !(self.t_s > 0.0 && self.t_s.is_finite()) {
            return bad("t_s must be positive");
        }
        if !(self.tau_s > 0.0 && self.tau_s.is_finite()) {
            return bad("tau_s must be positive");
        }
        if self.n == 0 || self.m == 0 {
            return bad("n and m must be at least 1");
        }
        if !(self.t_rf_s >= 0.0 && self.t_rf_s.is_finite()) {
            return bad("t_rf_s must be non-negative");
        }
        Ok(())
    }
}

/// Block-indexed emitter expectation values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalTrace {
    /// k tau for k = 1..n.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub emitter: Role,
    pub attenuation_applied: bool,
    /// Diagnostics raised while producing the trace.
    #[serde(default)]
    pub notes: Vec<String>,
}

impl SignalTrace {
    pub fn new(times: Vec<f64>, values: Vec<f64>, emitter: Role) -> Self {
        Self { times, values, emitter, attenuation_applied: false, notes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sampling interval, if the times are uniform.
    pub fn spacing(&self) -> Option<f64> {
        match self.times.len() {
            0 => None,
            1 => Some(self.times[0]),
            _ => {
                let dt = self.times[1] - self.times[0];
                let uniform = self
                    .times
                    .windows(2)
                    .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.abs().max(1e-300));
                (uniform && dt > 0.0).then_some(dt)
            }
        }
    }
}

fn block_times(config: &SequenceConfig) -> Vec<f64> {
    (1..=config.n).map(|k| k as f64 * config.tau_s).collect()
}

// --- Hamiltonian assembly -------------------------------------------------

/// Diagonal plus flip-flop terms, assembled in f64 and converted once.
struct Builder {
    n: usize,
    diag: Vec<f64>,
    flips: Vec<(usize, usize, f64)>,
}

impl Builder {
    fn new(n: usize) -> Self {
        Self { n, diag: vec![0.0; 1 << n], flips: Vec::new() }
    }

    fn bit(&self, b: usize, site: usize) -> f64 {
        if (b >> (self.n - 1 - site)) & 1 == 0 {
            0.5
        } else {
            -0.5
        }
    }

    fn z(&mut self, site: usize, w: f64) {
        if w == 0.0 {
            return;
        }
        for b in 0..self.diag.len() {
            self.diag[b] += w * self.bit(b, site);
        }
    }

    fn zz(&mut self, a: usize, b: usize, j: f64) {
        if j == 0.0 {
            return;
        }
        for s in 0..self.diag.len() {
            self.diag[s] += j * self.bit(s, a) * self.bit(s, b);
        }
    }

    /// J (S_a . S_b).
    fn dot(&mut self, a: usize, b: usize, j: f64) {
        if j == 0.0 {
            return;
        }
        self.zz(a, b, j);
        self.flips.push((a, b, j));
    }

    fn pair(&mut self, class: PairClass, a: usize, b: usize, j: f64) {
        match class {
            PairClass::Eq => self.dot(a, b, j),
            PairClass::Neq | PairClass::Het => self.zz(a, b, j),
        }
    }

    fn build<T: Real>(self) -> SpinOperator<T> {
        let d = self.diag.len();
        let mut m = CMatrix::<T>::zeros(d, d);
        for (i, v) in self.diag.iter().enumerate() {
            m[(i, i)] = Complex::new(nalgebra::convert(*v), T::zero());
        }
        for (a, b, j) in self.flips {
            let (ma, mb) = (1usize << (self.n - 1 - a), 1usize << (self.n - 1 - b));
            for s in 0..d {
                // (S+S- + S-S+)/2 connects |..0..1..> and |..1..0..>
                if ((s & ma) == 0) != ((s & mb) == 0) {
                    let t = s ^ ma ^ mb;
                    m[(t, s)] += Complex::new(nalgebra::convert(0.5 * j), T::zero());
                }
            }
        }
        SpinOperator::from_matrix(m).expect("assembled Hamiltonian has a power-of-two dimension")
    }
}

fn check_roles(molecule: &Molecule) -> Result<(), SequenceError> {
    if molecule.hydrogens().is_empty() {
        return Err(SequenceError::NoHydrogen);
    }
    if molecule.targets().is_empty() {
        return Err(SequenceError::NoTarget);
    }
    Ok(())
}

/// Refocused Hamiltonian of a stage.
///
/// Transfer keeps the hydrogen-target zz couplings and couplings inside the
/// pulsed target set. Loading keeps couplings among non-hydrogen nuclei and, without
/// pi pulses, their chemical shifts. Hydrogen-hydrogen couplings survive every
/// stage when `homonuclear` is set.
pub fn effective_hamiltonian<T: Real>(
    molecule: &Molecule,
    env: &Environment,
    stage: Stage,
    with_pi_pulses: bool,
    homonuclear: bool,
) -> SpinOperator<T> {
    let n = molecule.n_spins();
    let role = |i: usize| molecule.nuclei[i].role;
    let mut b = Builder::new(n);
    for i in 0..n {
        for k in i + 1..n {
            let j = molecule.coupling(i, k);
            let class = classify_pair(molecule, env, i, k);
            let (ri, rk) = (role(i), role(k));
            let hh = ri == Role::Hydrogen && rk == Role::Hydrogen;
            let keep = match stage {
                Stage::Transfer => {
                    let h_target = (ri == Role::Hydrogen && rk == Role::Target) || (ri == Role::Target && rk == Role::Hydrogen);
                    let target_pair = ri == Role::Target && rk == Role::Target;
                    h_target || target_pair || (hh && homonuclear)
                }
                Stage::Loading => (ri != Role::Hydrogen && rk != Role::Hydrogen) || (hh && homonuclear),
            };
            if keep {
                b.pair(class, i, k, j);
            }
        }
    }
    if stage == Stage::Loading && !with_pi_pulses {
        for i in molecule.non_hydrogens() {
            b.z(i, molecule.nuclei[i].shift);
        }
    }
    b.build()
}

/// Full interaction-picture Hamiltonian: every coupling by its RWA class plus all shifts.
pub fn full_hamiltonian<T: Real>(molecule: &Molecule, env: &Environment) -> SpinOperator<T> {
    let n = molecule.n_spins();
    let mut b = Builder::new(n);
    for i in 0..n {
        b.z(i, molecule.nuclei[i].shift);
        for k in i + 1..n {
            b.pair(classify_pair(molecule, env, i, k), i, k, molecule.coupling(i, k));
        }
    }
    b.build()
}

fn transfer_channels(molecule: &Molecule) -> Vec<usize> {
    let mut ch = molecule.hydrogens();
    ch.extend(molecule.targets());
    ch.sort_unstable();
    ch
}

fn half_pi<T: Real>() -> T {
    T::frac_pi_2()
}

fn sum_sz<T: Real>(n: usize, sites: &[usize]) -> CMatrix<T> {
    let d = 1usize << n;
    let mut m = CMatrix::<T>::zeros(d, d);
    for b in 0..d {
        let v: f64 = sites
            .iter()
            .map(|&s| if (b >> (n - 1 - s)) & 1 == 0 { 0.5 } else { -0.5 })
            .sum();
        m[(b, b)] = Complex::new(nalgebra::convert(v), T::zero());
    }
    m
}

/// Transfer stage on a raw operator (density matrix or deviation).
fn transfer_op<T: Real>(
    a: &CMatrix<T>,
    n: usize,
    channels: &[usize],
    eig: &Eigensystem<T>,
    t: T,
    direction: Direction,
) -> Result<CMatrix<T>, SpinError> {
    let angle = match direction {
        Direction::Forward => half_pi::<T>(),
        Direction::Rewind => -half_pi::<T>(),
    };
    let dt = match direction {
        Direction::Forward => t,
        Direction::Rewind => -t,
    };
    let mut m = a.clone();
    rotate_sites(&mut m, n, channels, Axis::Y, angle)?;
    let mut m = eig.conjugate(&m, dt);
    rotate_sites(&mut m, n, channels, Axis::Y, angle)?;
    Ok(m)
}

/// Applies one transfer stage (forward) or its inverse (rewind).
pub fn run_transfer<T: Real>(
    rho: &crate::spin::DensityMatrix<T>,
    molecule: &Molecule,
    env: &Environment,
    t: f64,
    direction: Direction,
    homonuclear: bool,
) -> Result<crate::spin::DensityMatrix<T>, SequenceError> {
    if t < 0.0 {
        return Err(SequenceError::InvalidConfig("transfer time must be non-negative".into()));
    }
    let h = effective_hamiltonian::<T>(molecule, env, Stage::Transfer, true, homonuclear);
    let eig = Eigensystem::of(&h)?;
    let m = transfer_op(
        rho.matrix(),
        molecule.n_spins(),
        &transfer_channels(molecule),
        &eig,
        nalgebra::convert(t),
        direction,
    )?;
    Ok(crate::spin::DensityMatrix::new(m)?)
}

/// Block-by-block expectation Tr(L^k(a) b) / d with L the loading propagator.
fn loading_series<T: Real>(
    eig: &Eigensystem<T>,
    state: &CMatrix<T>,
    observable: &CMatrix<T>,
    tau: f64,
    blocks: usize,
) -> Vec<f64> {
    let d = eig.dim();
    let a = eig.to_eigenbasis(state);
    let o = eig.to_eigenbasis(observable);
    // w_ab = a_ab o_ba, so signal_k = sum_ab w_ab e^{-i(E_a - E_b) k tau}
    let w = a.zip_map(&o.transpose(), |x, y| x * y);
    let mut out = Vec::with_capacity(blocks);
    for k in 1..=blocks {
        let p = eig.phases(nalgebra::convert(k as f64 * tau));
        let mut acc = Complex::new(T::zero(), T::zero());
        for j in 0..d {
            let pj = p[j].conj();
            let mut col = Complex::new(T::zero(), T::zero());
            for i in 0..d {
                col += w[(i, j)] * p[i];
            }
            acc += col * pj;
        }
        out.push(acc.re.to_f64().unwrap_or(f64::NAN) / d as f64);
    }
    out
}

fn deviation_of<T: Real>(polarizations: &[f64]) -> Result<CMatrix<T>, SequenceError> {
    let rho = polarized_state::<T>(polarizations)?;
    let d = rho.dim();
    let mut m = rho.matrix().map(|z| z * nalgebra::convert::<f64, T>(d as f64));
    for i in 0..d {
        m[(i, i)] -= Complex::new(T::one(), T::zero());
    }
    Ok(m)
}

fn third_order_note(molecule: &Molecule, t: f64) -> Vec<String> {
    let amp = analytic::general_amplitude(molecule, t);
    if amp.third_order_significant() {
        vec![format!(
            "third-order amplitude {:.4} exceeds 10% of first order {:.4}",
            amp.third_order, amp.first_order
        )]
    } else {
        Vec::new()
    }
}

/// Hydrogen-transfer protocol: returns <sum_i S_i^z> after each block's transfer stage.
pub fn run_protocol<T: Real>(
    molecule: &Molecule,
    env: &Environment,
    config: &SequenceConfig,
) -> Result<SignalTrace, SequenceError> {
    config.validate()?;
    check_roles(molecule)?;
    env.validate()?;
    match config.mode {
        EngineMode::Effective => run_effective::<T>(molecule, env, config),
        EngineMode::Explicit => run_explicit_pulse_check::<T>(molecule, env, config),
    }
}

fn run_effective<T: Real>(
    molecule: &Molecule,
    env: &Environment,
    config: &SequenceConfig,
) -> Result<SignalTrace, SequenceError> {
    let n = molecule.n_spins();
    let pol: Vec<f64> = molecule.nuclei.iter().map(|x| boltzmann_factor(x.gamma, env)).collect();
    let dev0 = deviation_of::<T>(&pol)?;
    let channels = transfer_channels(molecule);
    let t: T = nalgebra::convert(config.t_s);
    let h_t = effective_hamiltonian::<T>(molecule, env, Stage::Transfer, true, config.homonuclear);
    let eig_t = Eigensystem::of(&h_t)?;
    let dev1 = transfer_op(&dev0, n, &channels, &eig_t, t, Direction::Forward)?;
    // Heisenberg image of the observable through the block's transfer stage.
    let obs = sum_sz::<T>(n, &molecule.hydrogens());
    let obs = transfer_op(&obs, n, &channels, &eig_t, t, Direction::Rewind)?;
    let h_l = effective_hamiltonian::<T>(molecule, env, Stage::Loading, config.pi_pulses, config.homonuclear);
    let eig_l = Eigensystem::of(&h_l)?;
    let values = loading_series(&eig_l, &dev1, &obs, config.tau_s, config.n);
    let mut trace = SignalTrace::new(block_times(config), values, Role::Hydrogen);
    trace.notes = third_order_note(molecule, config.t_s);
    Ok(trace)
}

/// Direct baseline: prepolarized targets are read out themselves.
pub fn run_standard_protocol<T: Real>(
    molecule: &Molecule,
    env: &Environment,
    config: &SequenceConfig,
) -> Result<SignalTrace, SequenceError> {
    config.validate()?;
    check_roles(molecule)?;
    env.validate()?;
    let n = molecule.n_spins();
    let b_h = boltzmann_factor(molecule.nuclei[molecule.hydrogens()[0]].gamma, env);
    let pol: Vec<f64> = molecule
        .nuclei
        .iter()
        .map(|x| if x.role == Role::Target { b_h } else { boltzmann_factor(x.gamma, env) })
        .collect();
    let targets = molecule.targets();
    let mut dev = deviation_of::<T>(&pol)?;
    rotate_sites(&mut dev, n, &targets, Axis::X, half_pi::<T>())?;
    let mut obs = sum_sz::<T>(n, &targets);
    rotate_sites(&mut obs, n, &targets, Axis::X, -half_pi::<T>())?;
    let h_l = effective_hamiltonian::<T>(molecule, env, Stage::Loading, config.pi_pulses, config.homonuclear);
    let eig_l = Eigensystem::of(&h_l)?;
    let values = loading_series(&eig_l, &dev, &obs, config.tau_s, config.n);
    Ok(SignalTrace::new(block_times(config), values, Role::Target))
}

/// Literal stage-by-stage simulation with explicit refocusing pulses.
pub fn run_explicit_pulse_check<T: Real>(
    molecule: &Molecule,
    env: &Environment,
    config: &SequenceConfig,
) -> Result<SignalTrace, SequenceError> {
    config.validate()?;
    check_roles(molecule)?;
    let n = molecule.n_spins();
    if n > EXPLICIT_MAX_SPINS {
        return Err(SequenceError::ScaleGuard(n));
    }
    let pol: Vec<f64> = molecule.nuclei.iter().map(|x| boltzmann_factor(x.gamma, env)).collect();
    let mut rho = polarized_state::<T>(&pol)?.matrix().clone();
    let eig = Eigensystem::of(&full_hamiltonian::<T>(molecule, env))?;
    let hyd = molecule.hydrogens();
    let non_h = molecule.non_hydrogens();
    let channels = transfer_channels(molecule);
    let obs = sum_sz::<T>(n, &hyd);
    let pi = T::pi();
    let t: T = nalgebra::convert(config.t_s);
    let tau: T = nalgebra::convert(config.tau_s);
    let two: T = nalgebra::convert(2.0);
    let four: T = nalgebra::convert(4.0);

    let pulse = |m: &mut CMatrix<T>, sites: &[usize], axis: Axis, angle: T| rotate_sites(m, n, sites, axis, angle);
    let transfer = |m: &mut CMatrix<T>, forward: bool| -> Result<(), SpinError> {
        if forward {
            pulse(m, &channels, Axis::Y, half_pi::<T>())?;
            *m = eig.conjugate(m, t / two);
            pulse(m, &channels, Axis::X, pi)?;
            *m = eig.conjugate(m, t / two);
            pulse(m, &channels, Axis::X, -pi)?;
            pulse(m, &channels, Axis::Y, half_pi::<T>())
        } else {
            pulse(m, &channels, Axis::Y, -half_pi::<T>())?;
            pulse(m, &channels, Axis::X, pi)?;
            *m = eig.conjugate(m, -t / two);
            pulse(m, &channels, Axis::X, -pi)?;
            *m = eig.conjugate(m, -t / two);
            pulse(m, &channels, Axis::Y, -half_pi::<T>())
        }
    };

    transfer(&mut rho, true)?;
    let mut values = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        // loading
        if config.pi_pulses {
            rho = eig.conjugate(&rho, tau / four);
            pulse(&mut rho, &hyd, Axis::X, pi)?;
            rho = eig.conjugate(&rho, tau / four);
            pulse(&mut rho, &non_h, Axis::X, pi)?;
            rho = eig.conjugate(&rho, tau / four);
            pulse(&mut rho, &hyd, Axis::X, -pi)?;
            rho = eig.conjugate(&rho, tau / four);
            pulse(&mut rho, &non_h, Axis::X, -pi)?;
        } else {
            rho = eig.conjugate(&rho, tau / two);
            pulse(&mut rho, &hyd, Axis::X, pi)?;
            rho = eig.conjugate(&rho, tau / two);
            pulse(&mut rho, &hyd, Axis::X, -pi)?;
        }
        transfer(&mut rho, true)?;
        // detection: M pairs of +-2pi rotations leave the state in place
        for _ in 0..config.m {
            pulse(&mut rho, &hyd, Axis::Y, two * pi)?;
            pulse(&mut rho, &hyd, Axis::Y, -two * pi)?;
        }
        values.push(trace_product(&rho, &obs).re.to_f64().unwrap_or(f64::NAN));
        transfer(&mut rho, false)?;
    }
    let mut trace = SignalTrace::new(block_times(config), values, Role::Hydrogen);
    trace.notes = third_order_note(molecule, config.t_s);
    Ok(trace)
}

fn target_relaxation(molecule: &Molecule, pi_pulses: bool) -> Result<f64, SequenceError> {
    let species = &molecule.nuclei[*molecule.targets().first().ok_or(SequenceError::NoTarget)?].species;
    let r = molecule.relaxation(species).ok_or_else(|| SequenceError::MissingRelaxation(species.clone()))?;
    Ok(if pi_pulses { r.t2_s } else { r.t2_star_s })
}

/// Effective coherence time governing a trace's decay.
pub fn effective_t2(molecule: &Molecule, config: &SequenceConfig, emitter: Role) -> Result<f64, SequenceError> {
    let t2_1 = target_relaxation(molecule, config.pi_pulses)?;
    match emitter {
        Role::Hydrogen => {
            let h = molecule
                .relaxation("1H")
                .ok_or_else(|| SequenceError::MissingRelaxation("1H".into()))?;
            Ok(sensitivity::t2_eff_hydrogen(h.t2_s, t2_1, config.t_s, config.tau_s, config.m, config.t_rf_s))
        }
        _ => Ok(sensitivity::t2_eff_direct(t2_1, config.tau_s, config.m, config.t_rf_s)),
    }
}

/// Multiplies value k by exp(-k tau / T2eff).
pub fn apply_dephasing(
    trace: &SignalTrace,
    molecule: &Molecule,
    config: &SequenceConfig,
) -> Result<SignalTrace, SequenceError> {
    if trace.attenuation_applied {
        return Err(SequenceError::AlreadyAttenuated);
    }
    let t2 = effective_t2(molecule, config, trace.emitter)?;
    Ok(apply_envelope(trace, t2))
}

/// Dephasing with an explicit effective time; `f64::INFINITY` leaves values unchanged.
pub fn apply_envelope(trace: &SignalTrace, t2_eff: f64) -> SignalTrace {
    let mut out = trace.clone();
    for (v, &t) in out.values.iter_mut().zip(&trace.times) {
        *v *= (-t / t2_eff).exp();
    }
    out.attenuation_applied = true;
    out
}
