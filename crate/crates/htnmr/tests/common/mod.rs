#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use htnmr::molecule::{default_gamma_hz, load_molecule, Environment, Molecule, Nucleus, Relaxation, Role};
use proptest::prelude::*;

pub const HCN: &str = include_str!("../../../../molecules/hcn.json");
pub const PCH33: &str = include_str!("../../../../molecules/pch33.json");

pub fn hcn() -> Molecule {
    load_molecule(HCN).expect("hcn document")
}

pub fn pch33() -> Molecule {
    load_molecule(PCH33).expect("pch33 document")
}

/// t = 1 / (2 J_HC) for HCN.
pub const HCN_T: f64 = 1.0 / (2.0 * 267.0);

pub fn relaxation_table() -> BTreeMap<String, Relaxation> {
    [("1H", 1.0, 1.0), ("13C", 4.0, 0.4), ("15N", 6.0, 6.0), ("31P", 6.0, 6.0)]
        .into_iter()
        .map(|(s, a, b)| (s.to_string(), Relaxation { t2_s: a, t2_star_s: b }))
        .collect()
}

fn nucleus(label: String, species: &str, shift_hz: f64, role: Role) -> Nucleus {
    Nucleus {
        label,
        species: species.into(),
        gamma: 2.0 * PI * default_gamma_hz(species).unwrap(),
        shift: 2.0 * PI * shift_hz,
        role,
    }
}

/// Species and role of each extra site: 0 hydrogen, 1 target, 2 nitrogen, 3 phosphorus.
fn site(kind: u8) -> (&'static str, Role) {
    match kind {
        0 => ("1H", Role::Hydrogen),
        1 => ("13C", Role::Target),
        2 => ("15N", Role::Other),
        _ => ("31P", Role::Other),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_spins: usize,
    /// Allow more than one target.
    pub multi_target: bool,
    /// Allow more than one hydrogen.
    pub multi_hydrogen: bool,
}

/// Random molecule: site 0 is a hydrogen, site 1 a carbon target, the rest drawn
/// per `shape`. Shifts are continuous, so no two nuclei share a Larmor frequency.
pub fn arb_molecule(shape: Shape) -> impl Strategy<Value = Molecule> {
    let max_extra = shape.max_spins.saturating_sub(2);
    (
        prop::collection::vec(0u8..4, 0..=max_extra),
        prop::collection::vec(-300.0f64..300.0, 66),
        prop::collection::vec(-200.0f64..200.0, 12),
    )
        .prop_map(move |(kinds, js, shifts)| {
            let mut nuclei = vec![
                nucleus("H0".into(), "1H", shifts[0], Role::Hydrogen),
                nucleus("C1".into(), "13C", shifts[1], Role::Target),
            ];
            for (i, &k) in kinds.iter().enumerate() {
                let mut k = k;
                if k == 0 && !shape.multi_hydrogen {
                    k = 2;
                }
                if k == 1 && !shape.multi_target {
                    k = 3;
                }
                let (species, role) = site(k);
                nuclei.push(nucleus(format!("X{}", i + 2), species, shifts[i + 2], role));
            }
            let n = nuclei.len();
            let mut couplings = Vec::new();
            let mut idx = 0;
            for a in 0..n {
                for b in a + 1..n {
                    couplings.push((a, b, js[idx]));
                    idx += 1;
                }
            }
            Molecule::from_parts("random", nuclei, &couplings, relaxation_table(), Environment::default()).unwrap()
        })
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
