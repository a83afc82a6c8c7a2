//! Spectra of block traces, Lorentzian peak fits and SNR estimation.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;
use thiserror::Error;

use crate::molecule::{Environment, Molecule};
use crate::readout::{self, DetectionBudget, EmitterSpec, ReadoutConfig, ReadoutError};
use crate::sensitivity::{self, SensitivityParams};
use crate::sequence::{self, SequenceConfig, SequenceError, SignalTrace};

pub const DEFAULT_PADDING: usize = 4;
/// Noise-floor bins must lie this many fitted widths away from every peak.
pub const FLOOR_WIDTHS: f64 = 5.0;
/// Half-width, in padded bins, of the Lorentzian fit window.
pub const FIT_HALF_WIDTH: usize = 2;
/// Returned in place of an infinite SNR.
pub const SNR_CAP: f64 = 1e12;
const MIN_FLOOR_PAIRS: usize = 8;

#[derive(Debug, Error)]
pub enum SpectroError {
    #[error("trace times are not uniformly spaced")]
    NonUniform,
    #[error("trace is empty")]
    Empty,
    #[error("found {found} local maxima, {wanted} requested")]
    TooFewPeaks { found: usize, wanted: usize },
    #[error("only {0} noise-floor bins available")]
    InsufficientNoise(usize),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Readout(#[from] ReadoutError),
    #[error(transparent)]
    Sensitivity(#[from] sensitivity::SensitivityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Window {
    #[default]
    None,
    Hann,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub magnitudes: Vec<f64>,
    /// Native resolution 1/(n tau).
    pub resolution: f64,
    pub padding: usize,
    /// Complex one-sided DFT bins.
    #[serde(skip)]
    pub bins: Vec<Complex64>,
}

impl Spectrum {
    /// Sum of |X|^2 over the implied two-sided spectrum.
    pub fn two_sided_power(&self) -> f64 {
        let len = (self.bins.len() - 1) * 2;
        self.bins
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let edge = i == 0 || (2 * i == len);
                z.norm_sqr() * if edge { 1.0 } else { 2.0 }
            })
            .sum()
    }

    fn bin_spacing(&self) -> f64 {
        self.resolution / self.padding as f64
    }
}

/// Full-length DFT of `values` zero-padded to `padding` times their length.
pub fn dft(values: &[f64], padding: usize) -> Vec<Complex64> {
    let len = values.len() * padding.max(1);
    let mut buf: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    buf
}

/// |DFT| with x4 zero padding and no window.
pub fn spectrum(trace: &SignalTrace) -> Result<Spectrum, SpectroError> {
    spectrum_with(trace, DEFAULT_PADDING, Window::None)
}

pub fn spectrum_with(trace: &SignalTrace, padding: usize, window: Window) -> Result<Spectrum, SpectroError> {
    if trace.is_empty() {
        return Err(SpectroError::Empty);
    }
    let dt = trace.spacing().ok_or(SpectroError::NonUniform)?;
    let n = trace.len();
    let values: Vec<f64> = match window {
        Window::None => trace.values.clone(),
        Window::Hann => trace
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v * 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
            .collect(),
    };
    let padding = padding.max(1);
    let full = dft(&values, padding);
    let len = full.len();
    let bins: Vec<Complex64> = full[..=len / 2].to_vec();
    let freqs = (0..bins.len()).map(|i| i as f64 / (len as f64 * dt)).collect();
    Ok(Spectrum {
        freqs,
        magnitudes: bins.iter().map(|z| z.norm()).collect(),
        resolution: 1.0 / (n as f64 * dt),
        padding,
        bins,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakFit {
    pub center: f64,
    pub height: f64,
    /// Half width at half maximum, Hz.
    pub width: f64,
    pub model: &'static str,
}

fn lorentz(f: f64, p: &Vector3<f64>) -> f64 {
    let u = (f - p[1]) / p[2];
    p[0] / (1.0 + u * u)
}

/// Levenberg-Marquardt fit of h / (1 + ((f - c)/w)^2).
fn fit_lorentzian(fs: &[f64], ys: &[f64], guess: Vector3<f64>) -> Option<Vector3<f64>> {
    let cost = |p: &Vector3<f64>| fs.iter().zip(ys).map(|(&f, &y)| (y - lorentz(f, p)).powi(2)).sum::<f64>();
    let mut p = guess;
    let mut c0 = cost(&p);
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (&f, &y) in fs.iter().zip(ys) {
            let u = (f - p[1]) / p[2];
            let den = 1.0 + u * u;
            let g = Vector3::new(1.0 / den, 2.0 * p[0] * u / (p[2] * den * den), 2.0 * p[0] * u * u / (p[2] * den * den));
            jtj += g * g.transpose();
            jtr += g * (y - p[0] / den);
        }
        let mut damped = jtj;
        for i in 0..3 {
            damped[(i, i)] *= 1.0 + lambda;
        }
        let step = damped.lu().solve(&jtr)?;
        let mut cand = p + step;
        cand[2] = cand[2].abs().max(1e-12);
        let c1 = cost(&cand);
        if c1 < c0 {
            let done = (c0 - c1) <= 1e-15 * c0.max(1e-300);
            p = cand;
            c0 = c1;
            lambda = (lambda * 0.3).max(1e-12);
            if done {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    p.iter().all(|x| x.is_finite()).then_some(p)
}

fn local_maxima(mag: &[f64]) -> Vec<usize> {
    let n = mag.len();
    (0..n)
        .filter(|&i| {
            let left = i == 0 || mag[i] > mag[i - 1];
            let right = i + 1 == n || mag[i] > mag[i + 1];
            left && right && n > 1
        })
        .collect()
}

/// The `k` highest local maxima, each refined by a Lorentzian fit; sorted by center.
pub fn fit_peaks(spec: &Spectrum, k: usize) -> Result<Vec<PeakFit>, SpectroError> {
    let mut maxima = local_maxima(&spec.magnitudes);
    if maxima.len() < k || k == 0 {
        return Err(SpectroError::TooFewPeaks { found: maxima.len(), wanted: k });
    }
    maxima.sort_by(|&a, &b| spec.magnitudes[b].total_cmp(&spec.magnitudes[a]).then(a.cmp(&b)));
    let df = spec.bin_spacing();
    let mut peaks: Vec<PeakFit> = maxima[..k]
        .iter()
        .map(|&i| {
            let lo = i.saturating_sub(FIT_HALF_WIDTH);
            let hi = (i + FIT_HALF_WIDTH).min(spec.magnitudes.len() - 1);
            let fs = &spec.freqs[lo..=hi];
            let ys = &spec.magnitudes[lo..=hi];
            let guess = Vector3::new(spec.magnitudes[i], spec.freqs[i], spec.resolution);
            let fallback = PeakFit { center: spec.freqs[i], height: spec.magnitudes[i], width: spec.resolution, model: "lorentzian" };
            match fit_lorentzian(fs, ys, guess) {
                Some(p) if (p[1] - spec.freqs[i]).abs() <= FIT_HALF_WIDTH as f64 * df && p[0] > 0.0 => {
                    PeakFit { center: p[1], height: p[0], width: p[2].abs(), model: "lorentzian" }
                }
                _ => fallback,
            }
        })
        .collect();
    peaks.sort_by(|a, b| a.center.total_cmp(&b.center));
    Ok(peaks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum NoiseEstimator {
    /// Complex differences of neighbouring native bins in the floor region.
    #[default]
    NativeDifference,
    /// Standard deviation of floor-region magnitudes at native bins.
    MagnitudeStd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnrEstimate {
    pub snr: f64,
    pub noise: f64,
    /// True when the noise floor vanished and `snr` is the cap sentinel.
    pub capped: bool,
}

fn in_floor(f: f64, peaks: &[PeakFit]) -> bool {
    peaks.iter().all(|p| (f - p.center).abs() >= FLOOR_WIDTHS * p.width)
}

/// Noise level of the floor region as an equivalent magnitude std.
pub fn noise_floor(spec: &Spectrum, peaks: &[PeakFit], estimator: NoiseEstimator) -> Result<f64, SpectroError> {
    match estimator {
        NoiseEstimator::MagnitudeStd => {
            let xs: Vec<f64> = (0..spec.bins.len())
                .step_by(spec.padding)
                .filter(|&i| in_floor(spec.freqs[i], peaks))
                .map(|i| spec.magnitudes[i])
                .collect();
            if xs.len() < MIN_FLOOR_PAIRS {
                return Err(SpectroError::InsufficientNoise(xs.len()));
            }
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            Ok((xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt())
        }
        NoiseEstimator::NativeDifference => {
            let p = spec.padding;
            let mut acc = 0.0;
            let mut count = 0usize;
            let mut i = 0;
            while i + p < spec.bins.len() {
                if in_floor(spec.freqs[i], peaks) && in_floor(spec.freqs[i + p], peaks) {
                    acc += (spec.bins[i + p] - spec.bins[i]).norm_sqr();
                    count += 1;
                }
                i += p;
            }
            if count < MIN_FLOOR_PAIRS {
                return Err(SpectroError::InsufficientNoise(count));
            }
            // |dZ|^2 averages 2 bins x 2 components of per-component variance s^2
            let s = (acc / count as f64 / 4.0).sqrt();
            Ok(s * ((4.0 - std::f64::consts::PI) / 2.0).sqrt())
        }
    }
}

/// Peak height over the noise floor measured away from all fitted peaks.
pub fn snr(spec: &Spectrum, peaks: &[PeakFit], peak: &PeakFit) -> Result<SnrEstimate, SpectroError> {
    snr_with(spec, peaks, peak, NoiseEstimator::default())
}

pub fn snr_with(
    spec: &Spectrum,
    peaks: &[PeakFit],
    peak: &PeakFit,
    estimator: NoiseEstimator,
) -> Result<SnrEstimate, SpectroError> {
    let noise = noise_floor(spec, peaks, estimator)?;
    if noise <= 1e-9 * peak.height.abs() {
        return Ok(SnrEstimate { snr: SNR_CAP, noise, capped: true });
    }
    Ok(SnrEstimate { snr: (peak.height / noise).min(SNR_CAP), noise, capped: false })
}

/// Derives an independent per-run seed from a top-level seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Noise streams of the two protocols within one seed.
pub const STREAM_OURS: u64 = 1;
pub const STREAM_STANDARD: u64 = 2;

/// Noiseless (dephased) traces and readout setup for one protocol.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub expectation: SignalTrace,
    pub dephased: SignalTrace,
    pub emitter: EmitterSpec,
    pub budget: DetectionBudget,
}

impl Pipeline {
    pub fn ours(molecule: &Molecule, env: &Environment, config: &SequenceConfig, readout: &ReadoutConfig) -> Result<Self, SpectroError> {
        let expectation = sequence::run_protocol::<f64>(molecule, env, config)?;
        let dephased = sequence::apply_dephasing(&expectation, molecule, config)?;
        Ok(Self {
            expectation,
            dephased,
            emitter: EmitterSpec::hydrogen(molecule, env, readout),
            budget: DetectionBudget {
                block_duration: 2.0 * config.t_s + config.tau_s + config.m as f64 * config.t_rf_s,
                m: config.m,
            },
        })
    }

    pub fn standard(
        molecule: &Molecule,
        env: &Environment,
        config: &SequenceConfig,
        readout: &ReadoutConfig,
    ) -> Result<Self, SpectroError> {
        let expectation = sequence::run_standard_protocol::<f64>(molecule, env, config)?;
        let dephased = sequence::apply_dephasing(&expectation, molecule, config)?;
        Ok(Self {
            expectation,
            dephased,
            emitter: EmitterSpec::target(molecule, env, readout),
            budget: DetectionBudget { block_duration: config.tau_s + config.m as f64 * config.t_rf_s, m: config.m },
        })
    }

    pub fn noisy(&self, env: &Environment, readout: &ReadoutConfig, seed: u64, stream: u64) -> Result<SignalTrace, SpectroError> {
        Ok(readout::sample_readout(&self.dephased, env, readout, &self.emitter, &self.budget, seed, stream)?)
    }

    /// SNR of the tallest of `peaks` fitted lines in one noisy realization.
    pub fn measure(
        &self,
        env: &Environment,
        readout: &ReadoutConfig,
        seed: u64,
        stream: u64,
        peaks: usize,
    ) -> Result<SnrEstimate, SpectroError> {
        let noisy = self.noisy(env, readout, seed, stream)?;
        let spec = spectrum(&noisy)?;
        let fits = fit_peaks(&spec, peaks)?;
        let top = fits.iter().max_by(|a, b| a.height.total_cmp(&b.height)).copied().expect("k >= 1 peaks");
        snr(&spec, &fits, &top)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnrComparison {
    pub measured: f64,
    pub predicted: f64,
    pub mean_snr_ours: f64,
    pub mean_snr_standard: f64,
    pub seeds: usize,
}

/// Runs both pipelines over `seeds` and compares mean SNRs with the prediction.
pub fn snr_ratio(
    molecule: &Molecule,
    env: &Environment,
    ours: &SequenceConfig,
    standard: &SequenceConfig,
    readout: &ReadoutConfig,
    seeds: &[u64],
    peaks: usize,
) -> Result<SnrComparison, SpectroError> {
    let ph = Pipeline::ours(molecule, env, ours, readout)?;
    let p1 = Pipeline::standard(molecule, env, standard, readout)?;
    let results: Result<Vec<(f64, f64)>, SpectroError> = seeds
        .par_iter()
        .map(|&s| {
            let a = ph.measure(env, readout, s, STREAM_OURS, peaks)?;
            let b = p1.measure(env, readout, s, STREAM_STANDARD, peaks)?;
            Ok((a.snr, b.snr))
        })
        .collect();
    let results = results?;
    let count = results.len().max(1) as f64;
    let mean_h = results.iter().map(|r| r.0).sum::<f64>() / count;
    let mean_1 = results.iter().map(|r| r.1).sum::<f64>() / count;
    let mut params = SensitivityParams::for_molecule(molecule, env, ours, readout)?;
    params.m1 = standard.m;
    params.t_h = ours.t_rf_s;
    params.t1 = standard.t_rf_s;
    Ok(SnrComparison {
        measured: mean_h / mean_1,
        predicted: 1.0 / sensitivity::eta_ratio(&params),
        mean_snr_ours: mean_h,
        mean_snr_standard: mean_1,
        seeds: results.len(),
    })
}
