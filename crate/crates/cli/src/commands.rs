use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use beamforge::{
    correlation, default_grid, diagonal_sums, estimate_ripple, fit_coeffs, is_psd, metrics, orthogonalize,
    pattern_from_coeffs, pattern_from_matrix, psd_fit_with, remez_design, seeded_init, synthesize, tbp_weights,
    toeplitz_from_coeffs, CorrelationMatrix, CosineCoeffs, DesignReport, Error, PatternSamples, PatternSource,
    PsdFitOptions,
};
use log::{info, warn};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::files;
use crate::spec::{DesignSpecFile, Mode, Objective};

/// Set by `--record-time`. Off by default so reports stay byte-identical
/// across runs.
pub static RECORD_TIME: AtomicBool = AtomicBool::new(false);

fn wall_time(start: Instant) -> Option<f64> {
    RECORD_TIME.load(Ordering::Relaxed).then(|| start.elapsed().as_secs_f64())
}

/// Output directory: the flag wins over the spec file, then `.`.
fn out_dir(flag: Option<PathBuf>, spec: &DesignSpecFile) -> CliResult<PathBuf> {
    let dir = flag.or_else(|| spec.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn check_len(what: &str, got: usize, spec: &DesignSpecFile) -> CliResult<()> {
    if got != spec.elements {
        return Err(CliError::Input(format!(
            "{what} has dimension {got} but the spec asks for {} elements",
            spec.elements
        )));
    }
    Ok(())
}

/// `max_l |diag_sum_l - r_l| / |r_0|`.
fn coefficient_residual(r: &CorrelationMatrix, target: &CosineCoeffs) -> CliResult<f64> {
    let got = diagonal_sums(r)?;
    let scale = target.r0().abs().max(f64::MIN_POSITIVE);
    Ok(got
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0, f64::max))
}

pub fn design(spec: &DesignSpecFile, out: Option<PathBuf>) -> CliResult<()> {
    let dir = out_dir(out, spec)?;
    let start = Instant::now();
    let m = spec.elements;
    if let Some(d) = spec.target_delta {
        info!("design: M = {m} from the length estimate for delta = {d}");
    }
    let (res, converged) = match remez_design(m, &spec.band, spec.grid_density) {
        Ok(r) => (r, true),
        Err(Error::RemezNotConverged { last, .. }) => (*last, false),
        Err(e) => return Err(e.into()),
    };
    let pattern = pattern_from_coeffs(&res.coeffs, &default_grid(beamforge::DEFAULT_GRID_SIZE))?;
    let pm = metrics(&pattern, &spec.band)?;
    let report = DesignReport {
        elements: Some(m),
        delta: Some(res.delta),
        estimated_delta: Some(estimate_ripple(m, &spec.band)),
        stopband_peak_db: Some(pm.stopband_peak_db),
        passband_ripple: Some(pm.passband_ripple),
        extremal_angles: Some(res.extremal_angles.clone()),
        iterations: Some(res.iterations),
        converged: Some(converged),
        wall_time_s: wall_time(start),
        ..Default::default()
    };
    files::write_coeffs(&dir.join("coeffs.csv"), &res.coeffs)?;
    files::write_json(&dir.join("report.json"), &report)?;
    info!(
        "design: M = {m}, delta = {:.6e}, {} iterations, {:.3} s",
        res.delta,
        res.iterations,
        start.elapsed().as_secs_f64()
    );
    if !converged {
        return Err(CliError::NotConverged(format!(
            "Remez exchange did not converge after {} iterations; wrote the last iterate",
            res.iterations
        )));
    }
    Ok(())
}

pub fn realize(
    spec: &DesignSpecFile,
    coeffs_path: &Path,
    mode: Option<Mode>,
    max_iter: Option<usize>,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let mode = mode.unwrap_or(spec.mode);
    let coeffs = files::read_coeffs(coeffs_path)?;
    check_len(&coeffs_path.display().to_string(), coeffs.len(), spec)?;
    let dir = out_dir(out, spec)?;
    let start = Instant::now();
    let mut report = DesignReport {
        elements: Some(spec.elements),
        ..Default::default()
    };

    let (r, fit_failure) = match mode {
        Mode::Waveforms => {
            return Err(CliError::Input(
                "mode `waveforms` is run by the `waveforms` subcommand; realize takes toeplitz, psd-fit or tbp".into(),
            ))
        }
        Mode::Toeplitz => (toeplitz_from_coeffs(&coeffs)?, None),
        Mode::PsdFit | Mode::Tbp => {
            let mut opts = PsdFitOptions {
                equal_power: spec.equal_power,
                ..Default::default()
            };
            if let Some(n) = max_iter {
                opts.max_iter = n;
            }
            match psd_fit_with(&coeffs, &opts) {
                Ok(fit) => {
                    report.iterations = Some(fit.iterations);
                    report.power_spread = Some(fit.power_spread);
                    report.converged = Some(true);
                    (fit.matrix, None)
                }
                Err(Error::PsdFitNotConverged {
                    iterations,
                    residual,
                    power_spread,
                    last,
                }) => {
                    report.iterations = Some(iterations);
                    report.power_spread = Some(power_spread);
                    report.converged = Some(false);
                    let msg = format!(
                        "PSD fit did not converge after {iterations} iterations (coefficient residual {residual:.3e})"
                    );
                    (*last, Some(msg))
                }
                Err(e) => return Err(e.into()),
            }
        }
    };

    let check = is_psd(&r, 1e-12)?;
    report.min_eigenvalue = Some(check.min_eigenvalue);
    report.is_psd = Some(check.is_psd);
    report.coefficient_residual = Some(coefficient_residual(&r, &coeffs)?);
    files::write_matrix(&dir.join("R.csv"), r.matrix())?;

    if mode == Mode::Tbp && fit_failure.is_none() {
        let w = tbp_weights(&r)?;
        let norm = r.matrix().frobenius_norm().max(f64::MIN_POSITIVE);
        report.factorization_error = Some(w.correlation().sub(r.matrix()).frobenius_norm() / norm);
        report.weight_rank = Some(w.rank());
        files::write_matrix(&dir.join("W.csv"), w.entries())?;
    }
    report.wall_time_s = wall_time(start);
    files::write_json(&dir.join("report.json"), &report)?;
    info!("realize: mode {mode:?}, {:.3} s", start.elapsed().as_secs_f64());

    if let Some(msg) = fit_failure {
        return Err(CliError::NotConverged(msg));
    }
    if mode == Mode::Toeplitz && !check.is_psd {
        return Err(CliError::Infeasible(format!(
            "Toeplitz matrix is not positive semidefinite (min eigenvalue {:.3e}); rerun with --mode psd-fit or --mode tbp",
            check.min_eigenvalue
        )));
    }
    Ok(())
}

pub struct WaveformOverrides {
    pub objective: Option<Objective>,
    pub seed: Option<u64>,
    pub mu: Option<f64>,
    pub max_iter: Option<usize>,
}

pub fn waveforms(
    spec: &DesignSpecFile,
    target: Option<&Path>,
    over: WaveformOverrides,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let block = &spec.optimizer;
    let mut cfg = block.config();
    if let Some(s) = over.seed {
        cfg.seed = s;
    }
    if let Some(mu) = over.mu {
        cfg.mu = mu;
    }
    if let Some(n) = over.max_iter {
        cfg.max_iter = n;
    }
    cfg.validate()?;
    let objective = over.objective.unwrap_or(block.objective);
    let target = match (objective, target) {
        (Objective::Fit, None) => {
            return Err(CliError::Input("objective `fit` needs --target <coeffs.csv>".into()));
        }
        (Objective::Fit, Some(p)) => {
            let c = files::read_coeffs(p)?;
            check_len(&p.display().to_string(), c.len(), spec)?;
            Some(c)
        }
        (Objective::Orthogonalize, _) => None,
    };
    let dir = out_dir(out, spec)?;
    let start = Instant::now();
    let init = seeded_init(spec.elements, block.samples, block.harmonics, spec.energy, cfg.seed, cfg.sample_rate)?;
    let (best, mut report) = match &target {
        Some(c) => fit_coeffs(c, &init, &cfg)?,
        None => orthogonalize(&init, &cfg)?,
    };
    report.elements = Some(spec.elements);
    report.wall_time_s = wall_time(start);
    let x = synthesize(&best);
    files::write_alpha(&dir.join("alpha.csv"), &best)?;
    files::write_waveforms(&dir.join("waveforms.csv"), &x)?;
    files::write_json(&dir.join("report.json"), &report)?;
    info!(
        "waveforms: {objective:?}, objective {:.3e} -> {:.3e}, {} iterations, {:.3} s",
        report.objective_initial.unwrap_or(f64::NAN),
        report.objective_final.unwrap_or(f64::NAN),
        report.iterations.unwrap_or(0),
        start.elapsed().as_secs_f64()
    );
    if report.converged == Some(false) {
        warn!("optimizer stopped before reaching its objective floor");
        return Err(CliError::NotConverged(format!(
            "optimizer did not converge (objective {:.3e} after {} iterations); wrote the best iterate",
            report.objective_final.unwrap_or(f64::NAN),
            report.iterations.unwrap_or(0)
        )));
    }
    Ok(())
}

pub enum PatternInput {
    Matrix(PathBuf),
    Weights(PathBuf),
    Waveforms(PathBuf),
    Coeffs(PathBuf),
}

#[derive(Debug, Serialize)]
struct MetricsFile {
    passband_ripple: f64,
    stopband_peak: f64,
    stopband_peak_db: f64,
    transition_width: f64,
    grid_size: usize,
    source: PatternSource,
    /// Factor applied to the pattern so its mean level matches the reference.
    #[serde(skip_serializing_if = "Option::is_none")]
    scale: Option<f64>,
    /// `max_u |P(u) - P_ref(u)|` after scaling.
    #[serde(skip_serializing_if = "Option::is_none")]
    reference_deviation: Option<f64>,
}

pub fn evaluate(
    spec: &DesignSpecFile,
    input: PatternInput,
    reference: Option<&Path>,
    grid_size: usize,
    out: Option<PathBuf>,
) -> CliResult<()> {
    if grid_size < 2 {
        return Err(CliError::Input(format!("--grid must be at least 2, got {grid_size}")));
    }
    let grid = default_grid(grid_size);
    let matrix_pattern = |r: CorrelationMatrix, what: &Path, source: PatternSource| -> CliResult<(PatternSamples, f64)> {
        check_len(&what.display().to_string(), r.size(), spec)?;
        let mut p = pattern_from_matrix(&r, &grid)?;
        p.source = source;
        Ok((p, r.trace_energy()))
    };
    let (mut pattern, r0) = match &input {
        PatternInput::Matrix(path) => {
            let r = CorrelationMatrix::new(files::read_matrix(path)?)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            matrix_pattern(r, path, PatternSource::Matrix)?
        }
        PatternInput::Weights(path) => {
            let w = files::read_matrix(path)?;
            let r = CorrelationMatrix::new(w.gram()).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            matrix_pattern(r, path, PatternSource::Matrix)?
        }
        PatternInput::Waveforms(path) => {
            let x = files::read_waveforms(path)?;
            matrix_pattern(correlation(&x)?, path, PatternSource::Waveforms)?
        }
        PatternInput::Coeffs(path) => {
            let c = files::read_coeffs(path)?;
            check_len(&path.display().to_string(), c.len(), spec)?;
            (pattern_from_coeffs(&c, &grid)?, c.r0())
        }
    };

    let (mut scale, mut deviation) = (None, None);
    if let Some(path) = reference {
        let c = files::read_coeffs(path)?;
        check_len(&path.display().to_string(), c.len(), spec)?;
        if !(r0 > 0.0) {
            return Err(CliError::Input("pattern has zero mean level; cannot rescale to the reference".into()));
        }
        let s = c.r0() / r0;
        pattern.values.iter_mut().for_each(|v| *v *= s);
        let want = pattern_from_coeffs(&c, &grid)?;
        deviation = Some(pattern.max_abs_difference(&want)?);
        scale = Some(s);
    }
    let pm = metrics(&pattern, &spec.band)?;

    let dir = out_dir(out, spec)?;
    let p0 = spec.band.passband_level;
    let header = ["u_over_pi", "p", "p_db"].map(String::from);
    let rows = pattern.angles.iter().zip(&pattern.values).map(|(u, p)| {
        let db = if *p > 0.0 { 10.0 * (p / p0).log10() } else { f64::NEG_INFINITY };
        vec![files::fmt(u / std::f64::consts::PI), files::fmt(*p), files::fmt(db)]
    });
    files::write_rows(&dir.join("pattern.csv"), &header, rows)?;
    let mf = MetricsFile {
        passband_ripple: pm.passband_ripple,
        stopband_peak: pm.stopband_peak,
        stopband_peak_db: pm.stopband_peak_db,
        transition_width: pm.transition_width,
        grid_size,
        source: pattern.source,
        scale,
        reference_deviation: deviation,
    };
    files::write_json(&dir.join("metrics.json"), &mf)?;
    info!("evaluate: stopband peak {:.3} dB, ripple {:.3e}", pm.stopband_peak_db, pm.passband_ripple);
    Ok(())
}
