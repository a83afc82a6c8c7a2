use std::path::{Path, PathBuf};

use htnmr::molecule::{load_molecule, Molecule};
use htnmr::readout::{EmitterSpec, ReadoutConfig};
use htnmr::sequence::{EngineMode, SequenceConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityBlock {
    /// Detections per block for the baseline; optimized when absent.
    #[serde(default)]
    pub m1: Option<usize>,
    /// Re-optimize both M and M1 before reporting.
    #[serde(default)]
    pub optimize: bool,
    #[serde(default = "default_m_max")]
    pub m_max: usize,
    /// Monte Carlo seeds for the measured ratio; 0 skips the simulation.
    #[serde(default)]
    pub seeds: usize,
}

fn default_m_max() -> usize {
    400
}

/// Partial sequence block; missing keys fall back to molecule-derived defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceBlock {
    pub t_s: Option<f64>,
    pub tau_s: Option<f64>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub t_rf_s: Option<f64>,
    pub pi_pulses: Option<bool>,
    pub mode: Option<EngineMode>,
    pub homonuclear: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigDoc {
    pub molecule: Option<PathBuf>,
    #[serde(default)]
    pub sequence: SequenceBlock,
    #[serde(default)]
    pub readout: Option<ReadoutConfig>,
    #[serde(default)]
    pub sensitivity: SensitivityBlock,
    /// Lines to fit in the spectrum; 1 with pi pulses, 2 without by default.
    pub peaks: Option<usize>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Fully resolved run: everything that determines the outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    #[serde(skip)]
    pub molecule: Molecule,
    pub molecule_document: String,
    pub sequence: SequenceConfig,
    pub readout: ReadoutConfig,
    pub sensitivity: SensitivityBlock,
    pub peaks: usize,
    pub seed: u64,
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

pub struct Overrides<'a> {
    pub config: Option<&'a Path>,
    pub molecule: Option<&'a Path>,
    pub seed: Option<u64>,
    pub no_pi_pulses: bool,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

/// t = 1/(2 J) for the strongest hydrogen-target coupling.
fn default_transfer_time(m: &Molecule) -> Option<f64> {
    let j = m
        .hydrogens()
        .iter()
        .flat_map(|&h| m.targets().into_iter().map(move |c| (h, c)))
        .map(|(h, c)| m.coupling(h, c).abs())
        .fold(0.0, f64::max);
    (j > 0.0).then(|| std::f64::consts::PI / j)
}

impl RunConfig {
    pub fn resolve(o: &Overrides) -> Result<Self, CliError> {
        let (doc, base) = match o.config {
            Some(p) => {
                let doc: RunConfigDoc = serde_json::from_str(&read(p)?)
                    .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
                (doc, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (RunConfigDoc::default(), PathBuf::new()),
        };
        let mol_path = match (o.molecule, &doc.molecule) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(p)) => base.join(p),
            (None, None) => return Err(CliError::Validation("no molecule given (--molecule or config `molecule`)".into())),
        };
        let molecule_document = read(&mol_path)?;
        let molecule = load_molecule(&molecule_document)
            .map_err(|e| CliError::Validation(format!("{}: {e}", mol_path.display())))?;
        let readout = doc.readout.unwrap_or_default();
        readout.validate().map_err(|e| CliError::Validation(e.to_string()))?;

        let s = &doc.sequence;
        let t_rf = s.t_rf_s.unwrap_or_else(|| EmitterSpec::hydrogen(&molecule, &molecule.environment, &readout).rotation_time());
        let t = match s.t_s.or_else(|| default_transfer_time(&molecule)) {
            Some(t) => t,
            None => return Err(CliError::Validation("t_s missing and no hydrogen-target coupling to derive it".into())),
        };
        let mut sequence = SequenceConfig::new(t, s.tau_s.unwrap_or(1e-3), s.n.unwrap_or(240), s.m.unwrap_or(70), t_rf);
        sequence.pi_pulses = s.pi_pulses.unwrap_or(true) && !o.no_pi_pulses;
        sequence.mode = s.mode.unwrap_or_default();
        sequence.homonuclear = s.homonuclear.unwrap_or(true);
        sequence.validate().map_err(|e| CliError::Validation(e.to_string()))?;

        Ok(Self {
            peaks: doc.peaks.unwrap_or(if sequence.pi_pulses { 1 } else { 2 }),
            molecule,
            molecule_document,
            sequence,
            readout,
            sensitivity: doc.sensitivity,
            seed: o.seed.or(doc.seed).unwrap_or(0),
            output: doc.output.map(|p| base.join(p)),
        })
    }

    /// Baseline configuration: same tau and n, target-channel detection units.
    pub fn standard_sequence(&self, m1: usize) -> SequenceConfig {
        let e = EmitterSpec::target(&self.molecule, &self.molecule.environment, &self.readout);
        let mut c = self.sequence.clone();
        c.m = m1;
        c.t_rf_s = e.rotation_time();
        c
    }
}
