use htnmr::spin::{
    apply_pulse, embed_pauli, embed_pauli_capped, evolve, expectation, Axis, CMatrix, DensityMatrix, SpinError,
    SpinOperator,
};
use nalgebra::Complex;
use proptest::prelude::*;

const N: usize = 3;
const D: usize = 1 << N;

fn arb_complex_matrix() -> impl Strategy<Value = CMatrix<f64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), D * D)
        .prop_map(|v| CMatrix::from_iterator(D, D, v.into_iter().map(|(re, im)| Complex::new(re, im))))
}

fn arb_hamiltonian() -> impl Strategy<Value = SpinOperator<f64>> {
    arb_complex_matrix().prop_map(|a| SpinOperator::from_matrix(&a + a.adjoint()).unwrap())
}

fn arb_state() -> impl Strategy<Value = DensityMatrix<f64>> {
    arb_complex_matrix().prop_map(|b| {
        let p = &b * b.adjoint() + CMatrix::identity(D, D) * Complex::new(1e-3, 0.0);
        let tr = p.trace();
        DensityMatrix::new(p / tr).unwrap()
    })
}

fn spectra_close(a: &DensityMatrix<f64>, b: &DensityMatrix<f64>, tol: f64) -> bool {
    a.eigenvalues().iter().zip(b.eigenvalues()).all(|(x, y)| (x - y).abs() < tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn evolution_preserves_trace_hermiticity_and_spectrum(
        rho in arb_state(), h in arb_hamiltonian(), t in 0.0f64..5.0,
    ) {
        let out = evolve(&rho, &h, t).unwrap();
        prop_assert!((out.trace().re - 1.0).abs() < 1e-10);
        prop_assert!(out.trace().im.abs() < 1e-10);
        prop_assert!(out.hermitian_deviation() < 1e-10);
        prop_assert!(spectra_close(&rho, &out, 1e-10));
    }

    #[test]
    fn pulses_preserve_trace_hermiticity_and_spectrum(
        rho in arb_state(),
        axis in prop::sample::select(vec![Axis::X, Axis::Y, Axis::Z]),
        angle in -7.0f64..7.0,
        sites in prop::sample::subsequence(vec![0usize, 1, 2], 1..=3),
    ) {
        let out = apply_pulse(&rho, &sites, axis, angle).unwrap();
        prop_assert!((out.trace().re - 1.0).abs() < 1e-10);
        prop_assert!(out.hermitian_deviation() < 1e-10);
        prop_assert!(spectra_close(&rho, &out, 1e-10));
    }

    #[test]
    fn evolution_composes(rho in arb_state(), h in arb_hamiltonian(), t1 in 0.0f64..3.0, t2 in 0.0f64..3.0) {
        let split = evolve(&evolve(&rho, &h, t1).unwrap(), &h, t2).unwrap();
        let joint = evolve(&rho, &h, t1 + t2).unwrap();
        prop_assert!(split.max_abs_diff(&joint) < 1e-9);
    }

    #[test]
    fn operators_on_distinct_sites_commute(
        a in 0usize..4, b in 0usize..4,
        ax in prop::sample::select(vec![Axis::X, Axis::Y, Axis::Z]),
        bx in prop::sample::select(vec![Axis::X, Axis::Y, Axis::Z]),
    ) {
        prop_assume!(a != b);
        let p = embed_pauli::<f64>(4, a, ax).unwrap();
        let q = embed_pauli::<f64>(4, b, bx).unwrap();
        prop_assert!(p.commutator(&q).unwrap().max_norm() < 1e-13);
    }

    #[test]
    fn single_precision_evolution_preserves_trace(t in 0.0f32..2.0, site in 0usize..N) {
        let h = embed_pauli::<f32>(N, site, Axis::X).unwrap();
        let rho = DensityMatrix::<f32>::maximally_mixed(N);
        let mut m = rho.matrix().clone();
        m[(0, 0)] += Complex::new(0.05, 0.0);
        m[(D - 1, D - 1)] -= Complex::new(0.05, 0.0);
        let rho = DensityMatrix::new(m).unwrap();
        let out = evolve(&rho, &h, t).unwrap();
        prop_assert!((out.trace().re - 1.0).abs() < 1e-5);
    }
}

#[test]
fn spin_operators_obey_su2_commutation() {
    let x = embed_pauli::<f64>(2, 1, Axis::X).unwrap();
    let y = embed_pauli::<f64>(2, 1, Axis::Y).unwrap();
    let z = embed_pauli::<f64>(2, 1, Axis::Z).unwrap();
    // [Sx, Sy] = i Sz
    let c = x.commutator(&y).unwrap();
    let expected = z.matrix() * Complex::new(0.0, 1.0);
    assert!((c.matrix() - expected).iter().all(|z| z.norm() < 1e-15));
}

#[test]
fn site_zero_is_most_significant() {
    let z = embed_pauli::<f64>(2, 0, Axis::Z).unwrap();
    let diag: Vec<f64> = (0..4).map(|i| z.matrix()[(i, i)].re).collect();
    assert_eq!(diag, vec![0.5, 0.5, -0.5, -0.5]);
}

#[test]
fn quarter_turn_about_y_takes_z_to_x() {
    // Start with a small +z polarization on one spin.
    let mut m = DensityMatrix::<f64>::maximally_mixed(1).matrix().clone();
    m[(0, 0)] += Complex::new(0.1, 0.0);
    m[(1, 1)] -= Complex::new(0.1, 0.0);
    let rho = DensityMatrix::new(m).unwrap();
    let out = apply_pulse(&rho, &[0], Axis::Y, std::f64::consts::FRAC_PI_2).unwrap();
    let sx = embed_pauli::<f64>(1, 0, Axis::X).unwrap();
    let sz = embed_pauli::<f64>(1, 0, Axis::Z).unwrap();
    assert!((expectation(&out, &sx).unwrap() - 0.1).abs() < 1e-14);
    assert!(expectation(&out, &sz).unwrap().abs() < 1e-14);
}

#[test]
fn site_out_of_range_is_rejected() {
    assert!(matches!(embed_pauli::<f64>(3, 3, Axis::X), Err(SpinError::SiteOutOfRange { .. })));
}

#[test]
fn capacity_is_enforced() {
    assert!(matches!(embed_pauli::<f64>(13, 0, Axis::Z), Err(SpinError::Capacity { .. })));
    assert!(embed_pauli_capped::<f64>(5, 0, Axis::Z, 4).is_err());
}

#[test]
fn negative_duration_is_rejected() {
    let h = embed_pauli::<f64>(1, 0, Axis::Z).unwrap();
    let rho = DensityMatrix::<f64>::maximally_mixed(1);
    assert!(matches!(evolve(&rho, &h, -1.0), Err(SpinError::NegativeDuration(_))));
}

#[test]
fn non_hermitian_generator_is_rejected() {
    let mut m = CMatrix::<f64>::zeros(2, 2);
    m[(0, 1)] = Complex::new(1.0, 0.0);
    // Products and commutators may be non-Hermitian; only evolution refuses them.
    let h = SpinOperator::from_matrix(m).unwrap();
    assert!(!h.is_hermitian());
    let rho = DensityMatrix::<f64>::maximally_mixed(1);
    assert!(matches!(evolve(&rho, &h, 1.0), Err(SpinError::NotHermitian(_))));
}

#[test]
fn non_power_of_two_is_rejected() {
    assert!(matches!(SpinOperator::from_matrix(CMatrix::<f64>::zeros(3, 3)), Err(SpinError::NotPowerOfTwo(3))));
}

#[test]
fn empty_pulse_site_list_is_rejected() {
    let rho = DensityMatrix::<f64>::maximally_mixed(2);
    assert!(matches!(apply_pulse(&rho, &[], Axis::X, 1.0), Err(SpinError::EmptySites)));
}
