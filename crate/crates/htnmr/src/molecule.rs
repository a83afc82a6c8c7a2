//! Molecule ingestion, species constants, thermal states and RWA pair classes.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spin::{CMatrix, DensityMatrix, SpinError, DEFAULT_MAX_SPINS};
use crate::Real;

pub const HBAR: f64 = 1.054_571_817e-34;
pub const K_B: f64 = 1.380_649e-23;

#[derive(Debug, Error)]
pub enum MoleculeError {
    #[error("malformed molecule document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("molecule has no nuclei")]
    Empty,
    #[error("unknown species `{0}` and no gamma override")]
    UnknownSpecies(String),
    #[error("nucleus `{0}` has zero gyromagnetic ratio")]
    ZeroGamma(String),
    #[error("duplicate nucleus label `{0}`")]
    DuplicateLabel(String),
    #[error("coupling references unknown nucleus `{0}`")]
    UnknownNucleus(String),
    #[error("self-coupling on `{0}`")]
    SelfCoupling(String),
    #[error("coupling {a}-{b} listed with conflicting values {first} and {second} Hz")]
    Asymmetric { a: String, b: String, first: f64, second: f64 },
    #[error("invalid environment: B = {b_tesla} T, T = {temperature_k} K")]
    Environment { b_tesla: f64, temperature_k: f64 },
    #[error("invalid relaxation time for `{0}`")]
    Relaxation(String),
    #[error(transparent)]
    Spin(#[from] SpinError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Hydrogen,
    Target,
    Other,
}

/// Default gyromagnetic ratio in Hz/T for a species id.
pub fn default_gamma_hz(species: &str) -> Option<f64> {
    Some(match species {
        "1H" => 42.6e6,
        "2H" => 6.536e6,
        "13C" => 10.7e6,
        "15N" => -4.3e6,
        "19F" => 40.08e6,
        "31P" => 17.24e6,
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nucleus {
    pub label: String,
    pub species: String,
    /// rad s^-1 T^-1
    pub gamma: f64,
    /// rad/s, in the rotating frame of the species
    pub shift: f64,
    pub role: Role,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Relaxation {
    pub t2_s: f64,
    pub t2_star_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub b_tesla: f64,
    pub temperature_k: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Self { b_tesla: 2.0, temperature_k: 300.0 }
    }
}

impl Environment {
    pub fn new(b_tesla: f64, temperature_k: f64) -> Result<Self, MoleculeError> {
        let env = Self { b_tesla, temperature_k };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<(), MoleculeError> {
        if self.b_tesla > 0.0 && self.temperature_k > 0.0 && self.b_tesla.is_finite() {
            Ok(())
        } else {
            Err(MoleculeError::Environment { b_tesla: self.b_tesla, temperature_k: self.temperature_k })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairClass {
    /// Same species and shift: full dot-product coupling survives the RWA.
    Eq,
    /// Distinct Larmor frequencies within one channel: zz only.
    Neq,
    /// Hydrogen to non-hydrogen: zz only.
    Het,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Molecule {
    pub name: String,
    pub nuclei: Vec<Nucleus>,
    /// Symmetric J table in rad/s.
    couplings: Vec<Vec<f64>>,
    pub t2: BTreeMap<String, Relaxation>,
    pub environment: Environment,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NucleusDoc {
    label: String,
    species: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma_hz_per_tesla: Option<f64>,
    #[serde(default)]
    shift_hz: f64,
    role: Role,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CouplingDoc {
    a: String,
    b: String,
    j_hz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MoleculeDoc {
    #[serde(default)]
    name: String,
    nuclei: Vec<NucleusDoc>,
    #[serde(default)]
    couplings: Vec<CouplingDoc>,
    #[serde(default)]
    t2: BTreeMap<String, Relaxation>,
    #[serde(default)]
    environment: Environment,
}

/// Parses and validates a JSON molecule document. Hz inputs are stored as rad/s.
pub fn load_molecule(document: &str) -> Result<Molecule, MoleculeError> {
    let doc: MoleculeDoc = serde_json::from_str(document)?;
    if doc.nuclei.is_empty() {
        return Err(MoleculeError::Empty);
    }
    doc.environment.validate()?;
    let mut nuclei = Vec::with_capacity(doc.nuclei.len());
    for n in &doc.nuclei {
        if nuclei.iter().any(|m: &Nucleus| m.label == n.label) {
            return Err(MoleculeError::DuplicateLabel(n.label.clone()));
        }
        let gamma_hz = match n.gamma_hz_per_tesla {
            Some(g) => g,
            None => default_gamma_hz(&n.species).ok_or_else(|| MoleculeError::UnknownSpecies(n.species.clone()))?,
        };
        if gamma_hz == 0.0 {
            return Err(MoleculeError::ZeroGamma(n.label.clone()));
        }
        nuclei.push(Nucleus {
            label: n.label.clone(),
            species: n.species.clone(),
            gamma: 2.0 * PI * gamma_hz,
            shift: 2.0 * PI * n.shift_hz,
            role: n.role,
        });
    }
    let index = |label: &str| {
        nuclei
            .iter()
            .position(|n| n.label == label)
            .ok_or_else(|| MoleculeError::UnknownNucleus(label.to_string()))
    };
    let size = nuclei.len();
    let mut j_hz: Vec<Vec<Option<f64>>> = vec![vec![None; size]; size];
    for cpl in &doc.couplings {
        let (a, b) = (index(&cpl.a)?, index(&cpl.b)?);
        if a == b {
            return Err(MoleculeError::SelfCoupling(cpl.a.clone()));
        }
        if let Some(prev) = j_hz[a][b] {
            if prev != cpl.j_hz {
                return Err(MoleculeError::Asymmetric {
                    a: cpl.a.clone(),
                    b: cpl.b.clone(),
                    first: prev,
                    second: cpl.j_hz,
                });
            }
        }
        j_hz[a][b] = Some(cpl.j_hz);
        j_hz[b][a] = Some(cpl.j_hz);
    }
    for (species, r) in &doc.t2 {
        if !(r.t2_s > 0.0 && r.t2_star_s > 0.0) {
            return Err(MoleculeError::Relaxation(species.clone()));
        }
    }
    let couplings = j_hz
        .into_iter()
        .map(|row| row.into_iter().map(|j| 2.0 * PI * j.unwrap_or(0.0)).collect())
        .collect();
    Ok(Molecule { name: doc.name, nuclei, couplings, t2: doc.t2, environment: doc.environment })
}

impl Molecule {
    /// Builds a molecule directly; `couplings_hz` lists (a, b, J in Hz).
    pub fn from_parts(
        name: &str,
        nuclei: Vec<Nucleus>,
        couplings_hz: &[(usize, usize, f64)],
        t2: BTreeMap<String, Relaxation>,
        environment: Environment,
    ) -> Result<Self, MoleculeError> {
        if nuclei.is_empty() {
            return Err(MoleculeError::Empty);
        }
        let size = nuclei.len();
        let mut couplings = vec![vec![0.0; size]; size];
        for &(a, b, j) in couplings_hz {
            if a >= size || b >= size {
                return Err(MoleculeError::UnknownNucleus(format!("#{}", a.max(b))));
            }
            if a == b {
                return Err(MoleculeError::SelfCoupling(nuclei[a].label.clone()));
            }
            couplings[a][b] = 2.0 * PI * j;
            couplings[b][a] = 2.0 * PI * j;
        }
        Ok(Self { name: name.to_string(), nuclei, couplings, t2, environment })
    }

    pub fn n_spins(&self) -> usize {
        self.nuclei.len()
    }

    /// J between nuclei `a` and `b` in rad/s.
    pub fn coupling(&self, a: usize, b: usize) -> f64 {
        self.couplings[a][b]
    }

    pub fn set_coupling_hz(&mut self, a: usize, b: usize, j_hz: f64) {
        self.couplings[a][b] = 2.0 * PI * j_hz;
        self.couplings[b][a] = 2.0 * PI * j_hz;
    }

    pub fn indices(&self, role: Role) -> Vec<usize> {
        (0..self.n_spins()).filter(|&i| self.nuclei[i].role == role).collect()
    }

    pub fn hydrogens(&self) -> Vec<usize> {
        self.indices(Role::Hydrogen)
    }

    pub fn targets(&self) -> Vec<usize> {
        self.indices(Role::Target)
    }

    pub fn non_hydrogens(&self) -> Vec<usize> {
        (0..self.n_spins()).filter(|&i| self.nuclei[i].role != Role::Hydrogen).collect()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.nuclei.iter().position(|n| n.label == label)
    }

    /// Relaxation times of a species, if listed.
    pub fn relaxation(&self, species: &str) -> Option<Relaxation> {
        self.t2.get(species).copied()
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n_spins();
        (0..n).all(|i| self.couplings[i][i] == 0.0 && (0..n).all(|j| self.couplings[i][j] == self.couplings[j][i]))
    }

    /// Serializes back to the JSON document form (Hz units).
    pub fn to_document(&self) -> String {
        let nuclei = self
            .nuclei
            .iter()
            .map(|n| NucleusDoc {
                label: n.label.clone(),
                species: n.species.clone(),
                gamma_hz_per_tesla: Some(n.gamma / (2.0 * PI)),
                shift_hz: n.shift / (2.0 * PI),
                role: n.role,
            })
            .collect();
        let mut couplings = Vec::new();
        for a in 0..self.n_spins() {
            for b in a + 1..self.n_spins() {
                if self.couplings[a][b] != 0.0 {
                    couplings.push(CouplingDoc {
                        a: self.nuclei[a].label.clone(),
                        b: self.nuclei[b].label.clone(),
                        j_hz: self.couplings[a][b] / (2.0 * PI),
                    });
                }
            }
        }
        let doc = MoleculeDoc {
            name: self.name.clone(),
            nuclei,
            couplings,
            t2: self.t2.clone(),
            environment: self.environment,
        };
        serde_json::to_string_pretty(&doc).expect("molecule document serializes")
    }
}

/// hbar gamma B_z / (k_B T).
pub fn boltzmann_factor(gamma: f64, env: &Environment) -> f64 {
    HBAR * gamma * env.b_tesla / (K_B * env.temperature_k)
}

/// First-order thermal state (1/2^N)(1 + sum_i B_i sigma_i^z).
pub fn thermal_state<T: Real>(molecule: &Molecule, env: &Environment) -> Result<DensityMatrix<T>, MoleculeError> {
    let pol: Vec<f64> = molecule.nuclei.iter().map(|n| boltzmann_factor(n.gamma, env)).collect();
    polarized_state(&pol)
}

/// (1/2^N)(1 + sum_i p_i sigma_i^z) for explicit per-site polarizations.
pub fn polarized_state<T: Real>(polarizations: &[f64]) -> Result<DensityMatrix<T>, MoleculeError> {
    let size = polarizations.len();
    if size > DEFAULT_MAX_SPINS {
        return Err(SpinError::Capacity { size, max: DEFAULT_MAX_SPINS }.into());
    }
    let d = 1usize << size;
    let mut m = CMatrix::<T>::zeros(d, d);
    for b in 0..d {
        let mut v = 1.0;
        for (s, p) in polarizations.iter().enumerate() {
            let up = (b >> (size - 1 - s)) & 1 == 0;
            v += if up { *p } else { -*p };
        }
        m[(b, b)] = Complex::new(nalgebra::convert(v / d as f64), T::zero());
    }
    Ok(DensityMatrix::new(m)?)
}

/// RWA class of the pair (a, b).
pub fn classify_pair(molecule: &Molecule, env: &Environment, a: usize, b: usize) -> PairClass {
    let (na, nb) = (&molecule.nuclei[a], &molecule.nuclei[b]);
    let ha = na.role == Role::Hydrogen;
    let hb = nb.role == Role::Hydrogen;
    if ha != hb {
        return PairClass::Het;
    }
    let larmor_a = na.gamma * env.b_tesla + na.shift;
    let larmor_b = nb.gamma * env.b_tesla + nb.shift;
    if na.species == nb.species && larmor_a == larmor_b {
        PairClass::Eq
    } else {
        PairClass::Neq
    }
}

/// Classes of every unordered pair (a < b).
pub fn classify_pairs(molecule: &Molecule, env: &Environment) -> Vec<(usize, usize, PairClass)> {
    let n = molecule.n_spins();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            out.push((a, b, classify_pair(molecule, env, a, b)));
        }
    }
    out
}
