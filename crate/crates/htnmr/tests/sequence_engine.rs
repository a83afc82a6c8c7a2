mod common;

use std::f64::consts::PI;

use common::{arb_molecule, hcn, max_abs_diff, Shape, HCN_T};
use htnmr::analytic::general_amplitude;
use htnmr::molecule::{boltzmann_factor, Molecule, Role};
use htnmr::sequence::{
    apply_dephasing, effective_t2, run_explicit_pulse_check, run_protocol, run_standard_protocol, EngineMode,
    SequenceConfig, SequenceError,
};
use proptest::prelude::*;

fn b_h(m: &Molecule) -> f64 {
    boltzmann_factor(m.nuclei[m.hydrogens()[0]].gamma, &m.environment)
}

fn hcn_config(pi: bool) -> SequenceConfig {
    let mut c = SequenceConfig::new(HCN_T, 1e-3, 240, 70, 50e-6);
    c.pi_pulses = pi;
    c
}

/// -1/2 B_H cos(J_CN k tau / 2) [cos(delta k tau)] for a single H-C pair with t = 1/(2 J_HC).
fn hcn_expected(m: &Molecule, k: usize, tau: f64, shifts: bool) -> f64 {
    let ktau = k as f64 * tau;
    let mut c = (2.0 * PI * -25.0 * ktau / 2.0).cos();
    if shifts {
        c *= (2.0 * PI * 50.0 * ktau).cos();
    }
    -0.5 * b_h(m) * c
}

#[test]
fn hcn_transfer_trace_follows_carbon_nitrogen_cosine() {
    let m = hcn();
    for pi in [true, false] {
        let tr = run_protocol::<f64>(&m, &m.environment, &hcn_config(pi)).unwrap();
        assert_eq!(tr.len(), 240);
        assert_eq!(tr.emitter, Role::Hydrogen);
        for (k, v) in tr.values.iter().enumerate() {
            let want = hcn_expected(&m, k + 1, 1e-3, !pi);
            assert!((v - want).abs() < 1e-9 * b_h(&m), "k={} {v} vs {want}", k + 1);
        }
    }
}

#[test]
fn hcn_signal_vanishes_at_twenty_milliseconds() {
    let m = hcn();
    let tr = run_protocol::<f64>(&m, &m.environment, &hcn_config(true)).unwrap();
    assert!((tr.times[19] - 0.020).abs() < 1e-15);
    assert!(tr.values[19].abs() < 1e-9 * b_h(&m));
}

#[test]
fn baseline_matches_transfer_for_hcn() {
    let m = hcn();
    for pi in [true, false] {
        let ours = run_protocol::<f64>(&m, &m.environment, &hcn_config(pi)).unwrap();
        let base = run_standard_protocol::<f64>(&m, &m.environment, &hcn_config(pi)).unwrap();
        assert_eq!(base.emitter, Role::Target);
        assert!(max_abs_diff(&ours.values, &base.values) < 1e-9 * b_h(&m));
    }
}

#[test]
fn single_precision_engine_tracks_double() {
    let m = hcn();
    let c = hcn_config(false);
    let a = run_protocol::<f64>(&m, &m.environment, &c).unwrap();
    let b = run_protocol::<f32>(&m, &m.environment, &c).unwrap();
    assert!(max_abs_diff(&a.values, &b.values) < 1e-3 * b_h(&m));
}

#[test]
fn explicit_mode_refuses_large_systems() {
    let m = common::pch33();
    let mut c = SequenceConfig::new(5.7e-3, 1e-3, 4, 1, 50e-6);
    c.mode = EngineMode::Explicit;
    assert!(matches!(run_explicit_pulse_check::<f64>(&m, &m.environment, &c), Err(SequenceError::ScaleGuard(11))));
}

#[test]
fn dephasing_applies_once() {
    let m = hcn();
    let c = hcn_config(true);
    let tr = run_protocol::<f64>(&m, &m.environment, &c).unwrap();
    let once = apply_dephasing(&tr, &m, &c).unwrap();
    assert!(once.attenuation_applied);
    let t2 = effective_t2(&m, &c, Role::Hydrogen).unwrap();
    let k = 100;
    assert!((once.values[k] - tr.values[k] * (-tr.times[k] / t2).exp()).abs() < 1e-20);
    assert!(matches!(apply_dephasing(&once, &m, &c), Err(SequenceError::AlreadyAttenuated)));
}

#[test]
fn roles_and_configs_are_validated() {
    let m = hcn();
    let mut bare = m.clone();
    bare.nuclei[1].role = Role::Other;
    assert!(matches!(run_protocol::<f64>(&bare, &m.environment, &hcn_config(true)), Err(SequenceError::NoTarget)));
    let mut c = hcn_config(true);
    c.n = 0;
    assert!(matches!(run_protocol::<f64>(&m, &m.environment, &c), Err(SequenceError::InvalidConfig(_))));
}

#[test]
fn optimal_transfer_time_leaves_only_the_transferred_amplitude() {
    let m = hcn();
    let amp = general_amplitude(&m, HCN_T);
    assert!(amp.residual < 1e-20);
    let tr = run_protocol::<f64>(&m, &m.environment, &hcn_config(true)).unwrap();
    let bound = 0.5 * b_h(&m) * amp.first_order + 1e-12;
    assert!(tr.values.iter().all(|v| v.abs() <= bound));
}

const SMALL: Shape = Shape { max_spins: 4, multi_target: true, multi_hydrogen: true };

fn arb_config() -> impl Strategy<Value = SequenceConfig> {
    (0.5e-3f64..8e-3, 0.2e-3f64..3e-3, 1usize..16, any::<bool>()).prop_map(|(t, tau, n, pi)| {
        let mut c = SequenceConfig::new(t, tau, n, 3, 50e-6);
        c.pi_pulses = pi;
        c
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn signal_is_bounded_by_transfer_amplitude(
        m in arb_molecule(Shape { max_spins: 4, multi_target: false, multi_hydrogen: true }),
        c in arb_config(),
    ) {
        let mut c = c;
        c.homonuclear = false;
        let tr = run_protocol::<f64>(&m, &m.environment, &c).unwrap();
        let amp = general_amplitude(&m, c.t_s);
        let bound = 0.5 * b_h(&m) * (amp.first_order + amp.residual) + 1e-12;
        for v in &tr.values {
            prop_assert!(v.abs() <= bound, "{} > {}", v.abs(), bound);
        }
    }

    #[test]
    fn effective_and_explicit_modes_agree(m in arb_molecule(SMALL), c in arb_config()) {
        let eff = run_protocol::<f64>(&m, &m.environment, &c).unwrap();
        let mut x = c.clone();
        x.mode = EngineMode::Explicit;
        let exp = run_protocol::<f64>(&m, &m.environment, &x).unwrap();
        prop_assert!(max_abs_diff(&eff.values, &exp.values) < 1e-8 * b_h(&m));
    }

    #[test]
    fn refocused_traces_ignore_chemical_shifts(
        m in arb_molecule(SMALL), c in arb_config(), new_shifts in prop::collection::vec(-500.0f64..500.0, 4),
    ) {
        let mut c = c;
        c.pi_pulses = true;
        let mut moved = m.clone();
        for (nuc, s) in moved.nuclei.iter_mut().zip(&new_shifts) {
            nuc.shift = 2.0 * PI * s;
        }
        let a = run_protocol::<f64>(&m, &m.environment, &c).unwrap();
        let b = run_protocol::<f64>(&moved, &m.environment, &c).unwrap();
        prop_assert!(max_abs_diff(&a.values, &b.values) < 1e-10 * b_h(&m));
    }

    #[test]
    fn longer_runs_extend_shorter_ones(m in arb_molecule(SMALL), c in arb_config()) {
        let short = run_protocol::<f64>(&m, &m.environment, &c).unwrap();
        let mut c2 = c.clone();
        c2.n = 2 * c.n;
        let long = run_protocol::<f64>(&m, &m.environment, &c2).unwrap();
        prop_assert!(max_abs_diff(&short.values, &long.values[..c.n]) < 1e-12 * b_h(&m));
        prop_assert_eq!(&short.times[..], &long.times[..c.n]);
    }
}
