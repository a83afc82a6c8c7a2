use std::path::Path;

use htnmr::analytic::{oracle_trace, standard_oracle_trace};
use htnmr::molecule::boltzmann_factor;
use htnmr::readout::expected_readout;
use htnmr::sensitivity::{self, log_grid, optimize_measurements, report, with_optimal_counts, SensitivityParams};
use htnmr::sequence::{run_protocol, run_standard_protocol, EngineMode, SequenceError, EXPLICIT_MAX_SPINS};
use htnmr::spectro::{derive_seed, fit_peaks, snr, snr_ratio, spectrum, Pipeline, SpectroError, STREAM_OURS, STREAM_STANDARD};
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{commit, config_hash, csv, num, Artifact, TOOL_VERSION};
use crate::CliError;

/// Relative deviation (in units of B_H / 2) above which validation fails.
pub const VALIDATE_TOL: f64 = 1e-8;

fn sequence_err(e: SequenceError) -> CliError {
    match e {
        SequenceError::Spin(_) => CliError::Numerical(e.to_string()),
        _ => CliError::Validation(e.to_string()),
    }
}

fn spectro_err(e: SpectroError) -> CliError {
    match e {
        SpectroError::Sequence(s) => sequence_err(s),
        SpectroError::Readout(_) | SpectroError::Sensitivity(_) => CliError::Validation(e.to_string()),
        _ => CliError::Numerical(e.to_string()),
    }
}

fn params(run: &RunConfig) -> Result<SensitivityParams, CliError> {
    let m = &run.molecule;
    let mut p = SensitivityParams::for_molecule(m, &m.environment, &run.sequence, &run.readout)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    p.m1 = match run.sensitivity.m1 {
        Some(m1) => m1,
        None => optimize_measurements(&p, run.sensitivity.m_max).1,
    };
    if run.sensitivity.optimize {
        p = with_optimal_counts(&p, run.sensitivity.m_max);
    }
    Ok(p)
}

pub fn simulate(run: &RunConfig, standard: bool, dir: &Path) -> Result<(), CliError> {
    let m = &run.molecule;
    let env = m.environment;
    let (pipeline, stream) = if standard {
        let seq = run.standard_sequence(params(run)?.m1);
        (Pipeline::standard(m, &env, &seq, &run.readout).map_err(spectro_err)?, STREAM_STANDARD)
    } else {
        (Pipeline::ours(m, &env, &run.sequence, &run.readout).map_err(spectro_err)?, STREAM_OURS)
    };
    let noisy = pipeline.noisy(&env, &run.readout, run.seed, stream).map_err(spectro_err)?;
    let clean = expected_readout(&pipeline.dephased, &env, &run.readout, &pipeline.emitter);
    let spec = spectrum(&noisy).map_err(spectro_err)?;
    let peaks = fit_peaks(&spec, run.peaks).map_err(spectro_err)?;
    let snrs = peaks
        .iter()
        .map(|p| snr(&spec, &peaks, p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(spectro_err)?;

    let hash = config_hash(run);
    let tr = &pipeline.expectation;
    let trace_rows = (0..tr.len()).map(|k| {
        vec![
            (k + 1).to_string(),
            num(tr.times[k]),
            num(tr.values[k]),
            num(pipeline.dephased.values[k]),
            num(clean[k]),
            num(noisy.values[k]),
        ]
    });
    let artifacts = vec![
        csv(
            "trace.csv",
            &hash,
            &["k", "t_s", "expectation", "dephased_expectation", "expected_readout", "noisy_readout"],
            trace_rows,
        ),
        csv(
            "spectrum.csv",
            &hash,
            &["freq_hz", "magnitude"],
            spec.freqs.iter().zip(&spec.magnitudes).map(|(f, a)| vec![num(*f), num(*a)]),
        ),
        csv(
            "peaks.csv",
            &hash,
            &["peak", "center_hz", "height", "width_hz", "snr", "snr_capped"],
            peaks.iter().zip(&snrs).enumerate().map(|(i, (p, s))| {
                vec![(i + 1).to_string(), num(p.center), num(p.height), num(p.width), num(s.snr), s.capped.to_string()]
            }),
        ),
    ];
    let written = commit(dir, &artifacts)?;
    for (p, s) in peaks.iter().zip(&snrs) {
        println!("peak {:.3} Hz  height {:.4e}  SNR {:.2}", p.center, p.height, s.snr);
    }
    for w in written {
        println!("wrote {}", w.display());
    }
    Ok(())
}

pub fn parse_sweep(spec: &str) -> Result<(f64, f64, usize), CliError> {
    let bad = || CliError::Validation(format!("--sweep-t2nv expects LO:HI:N, got `{spec}`"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi >= lo && n >= 1) {
        return Err(bad());
    }
    Ok((lo, hi, n))
}

pub fn sensitivity(run: &RunConfig, sweep: Option<(f64, f64, usize)>, dir: &Path) -> Result<(), CliError> {
    let m = &run.molecule;
    let p = params(run)?;
    let mut rep = report(&p, run.sensitivity.m_max);
    if run.sensitivity.seeds > 0 {
        let mut ours = run.sequence.clone();
        ours.m = p.m;
        let standard = run.standard_sequence(p.m1);
        let seeds: Vec<u64> = (0..run.sensitivity.seeds as u64).map(|i| derive_seed(run.seed, i)).collect();
        let cmp = snr_ratio(m, &m.environment, &ours, &standard, &run.readout, &seeds, run.peaks).map_err(spectro_err)?;
        rep.snr_ratio_measured = Some(cmp.measured);
    }
    let hash = config_hash(run);
    let doc = json!({
        "tool_version": TOOL_VERSION,
        "config_sha256": hash,
        "molecule": m.name,
        "pi_pulses": run.sequence.pi_pulses,
        "report": rep,
    });
    let mut artifacts = vec![Artifact {
        name: "report.json",
        body: serde_json::to_string_pretty(&doc).expect("report serializes") + "\n",
    }];
    if let Some((lo, hi, n)) = sweep {
        let rows: Vec<Vec<String>> = log_grid(lo, hi, n)
            .into_iter()
            .map(|t2| {
                let mut q = p.clone();
                q.readout.t2_nv_s = t2;
                let q = with_optimal_counts(&q, run.sensitivity.m_max);
                let eta = sensitivity::eta_ratio(&q);
                vec![num(t2), num(eta), num(1.0 / eta), q.m.to_string(), q.m1.to_string()]
            })
            .collect();
        artifacts.push(csv("fig2.csv", &hash, &["t2nv_s", "eta_ratio", "snr_ratio_pred", "optimal_m", "optimal_m1"], rows));
    }
    let written = commit(dir, &artifacts)?;
    println!(
        "eta ratio {:.4}  predicted SNR ratio {:.2}  (M = {}, M1 = {})",
        rep.eta_ratio, rep.snr_ratio_pred, rep.m, rep.m1
    );
    if let Some(x) = rep.snr_ratio_measured {
        println!("measured SNR ratio {x:.2} over {} seeds", run.sensitivity.seeds);
    }
    for w in written {
        println!("wrote {}", w.display());
    }
    Ok(())
}

fn worst(a: &[f64], b: &[f64], scale: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / scale).fold(0.0, f64::max)
}

pub fn validate(run: &RunConfig, inject_fault: bool) -> Result<(), CliError> {
    let m = &run.molecule;
    let env = m.environment;
    let hyd = m.hydrogens();
    let first_h = *hyd.first().ok_or_else(|| sequence_err(SequenceError::NoHydrogen))?;
    let scale = 0.5 * boltzmann_factor(m.nuclei[first_h].gamma, &env);
    let mut cfg = run.sequence.clone();
    cfg.mode = EngineMode::Effective;
    let mut failed = false;
    let mut line = |name: &str, dev: Option<f64>| {
        match dev {
            Some(d) => {
                let ok = d < VALIDATE_TOL;
                failed |= !ok;
                println!("{} {name}: max |delta| = {d:.3e} (tol {VALIDATE_TOL:.0e})", if ok { "PASS" } else { "FAIL" });
            }
            None => println!("SKIP {name}"),
        }
    };

    let eff = run_protocol::<f64>(m, &env, &cfg).map_err(sequence_err)?;
    if m.targets().len() == 1 {
        let mut plain = cfg.clone();
        plain.homonuclear = false;
        let engine = run_protocol::<f64>(m, &env, &plain).map_err(sequence_err)?;
        let mut oracle_mol = m.clone();
        if inject_fault {
            let c = m.targets()[0];
            let j = m.coupling(first_h, c) / (2.0 * std::f64::consts::PI);
            oracle_mol.set_coupling_hz(first_h, c, 1.1 * j);
        }
        let oracle = oracle_trace(&oracle_mol, &env, &plain, true);
        line("engine vs closed form", Some(worst(&engine.values, &oracle.values, scale)));
        let base = run_standard_protocol::<f64>(m, &env, &plain).map_err(sequence_err)?;
        let base_oracle = standard_oracle_trace(&oracle_mol, &env, &plain);
        line("baseline vs closed form", Some(worst(&base.values, &base_oracle.values, scale)));
    } else {
        line("closed-form comparisons (single target only)", None);
    }
    if m.n_spins() <= EXPLICIT_MAX_SPINS {
        let mut x = cfg.clone();
        x.mode = EngineMode::Explicit;
        let exp = run_protocol::<f64>(m, &env, &x).map_err(sequence_err)?;
        line("effective vs explicit pulses", Some(worst(&eff.values, &exp.values, scale)));
    } else {
        line("effective vs explicit pulses (at most 4 spins)", None);
    }
    for note in &eff.notes {
        println!("note: {note}");
    }
    if failed {
        Err(CliError::Numerical("validation failed".into()))
    } else {
        Ok(())
    }
}
