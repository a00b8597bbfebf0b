//! Multi-tone sinusoidal FM waveform sets.
//!
//! Waveform `m` is `sqrt(E/(M N)) exp(j phi_m[n])` with
//! `phi_m[n] = sum_p alpha[m][p] sin(2 pi p n / N)`. Phases are odd in `n`
//! (mod `N`), which makes every cross-correlation real.

use std::cell::Cell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::beampattern::{default_grid, pattern_from_coeffs, pattern_from_matrix, DEFAULT_GRID_SIZE};
use crate::cheb_design::CosineCoeffs;
use crate::corr_synth::CorrelationMatrix;
use crate::error::{invalid, Error, Result};
use crate::linalg::CMatrix;
use crate::optim::{central_difference, Bfgs, BfgsOptions, StepOutcome};
use crate::report::DesignReport;

/// Time-bandwidth product of the reference designs.
pub const DEFAULT_TIME_BANDWIDTH: usize = 64;
/// `ceil(TB / 2)`.
pub const DEFAULT_HARMONICS: usize = 32;
/// `5 TB + 1`: sampling at five times the swept bandwidth.
pub const DEFAULT_SAMPLES: usize = 321;
/// Normalized sample rate; the nominal swept bandwidth is `fs / 5`.
pub const DEFAULT_SAMPLE_RATE: f64 = 1.0;

/// Waveform-set shape plus the `M x P` phase coefficient table (row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtsfmParams {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub energy: f64,
    pub alpha: Vec<f64>,
}

impl MtsfmParams {
    pub fn new(m: usize, n: usize, p: usize, energy: f64, alpha: Vec<f64>) -> Result<Self> {
        let params = Self { m, n, p, energy, alpha };
        params.validate()?;
        Ok(params)
    }

    pub fn zeros(m: usize, n: usize, p: usize, energy: f64) -> Result<Self> {
        Self::new(m, n, p, energy, vec![0.0; m * p])
    }

    /// `M` waveforms with `N = 321`, `P = 32` and zero phase.
    pub fn with_defaults(m: usize, energy: f64) -> Result<Self> {
        Self::zeros(m, DEFAULT_SAMPLES, DEFAULT_HARMONICS, energy)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.p == 0 {
            return invalid("MTSFM set needs M >= 1 and P >= 1");
        }
        if self.n < 2 * self.p + 1 {
            return invalid(format!("N = {} cannot resolve P = {} harmonics (need N >= 2P + 1)", self.n, self.p));
        }
        if !(self.energy > 0.0 && self.energy.is_finite()) {
            return invalid("energy must be positive and finite");
        }
        if self.alpha.len() != self.m * self.p {
            return invalid(format!("alpha has {} entries, expected {}", self.alpha.len(), self.m * self.p));
        }
        if self.alpha.iter().any(|a| !a.is_finite()) {
            return invalid("alpha has non-finite entries");
        }
        Ok(())
    }

    pub fn alpha_row(&self, m: usize) -> &[f64] {
        &self.alpha[m * self.p..(m + 1) * self.p]
    }

    fn with_alpha(&self, alpha: Vec<f64>) -> Self {
        Self { alpha, ..self.clone() }
    }
}

/// `M x N` complex baseband samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformSet {
    samples: CMatrix,
    params: Option<MtsfmParams>,
}

impl WaveformSet {
    /// Wraps externally produced samples (no MTSFM provenance).
    pub fn from_samples(samples: CMatrix) -> Result<Self> {
        if samples.rows() == 0 || samples.cols() == 0 {
            return invalid("waveform set is empty");
        }
        if samples.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("waveform set has non-finite samples");
        }
        Ok(Self { samples, params: None })
    }

    pub fn samples(&self) -> &CMatrix {
        &self.samples
    }

    pub fn params(&self) -> Option<&MtsfmParams> {
        self.params.as_ref()
    }

    /// Waveform count `M`.
    pub fn count(&self) -> usize {
        self.samples.rows()
    }

    /// Samples per waveform `N`.
    pub fn len(&self) -> usize {
        self.samples.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.cols() == 0
    }

    pub fn waveform(&self, m: usize) -> &[Complex64] {
        self.samples.row(m)
    }

    pub fn energy(&self) -> f64 {
        self.samples.as_slice().iter().map(|z| z.norm_sqr()).sum()
    }
}

fn sine_table(n: usize, p: usize) -> Vec<f64> {
    let mut s = vec![0.0; p * n];
    for h in 0..p {
        for k in 0..n {
            // reduce the phase index first so large p * n stays exact
            let idx = ((h + 1) * k) % n;
            s[h * n + k] = (2.0 * PI * idx as f64 / n as f64).sin();
        }
    }
    s
}

pub fn synthesize(params: &MtsfmParams) -> WaveformSet {
    let s = sine_table(params.n, params.p);
    let data = synth_flat(params, &s);
    WaveformSet {
        samples: CMatrix::from_vec(params.m, params.n, data).expect("shape matches by construction"),
        params: Some(params.clone()),
    }
}

fn synth_flat(params: &MtsfmParams, sines: &[f64]) -> Vec<Complex64> {
    let (m, n) = (params.m, params.n);
    let amp = (params.energy / (m * n) as f64).sqrt();
    let mut out = Vec::with_capacity(m * n);
    let mut phase = vec![0.0; n];
    for w in 0..m {
        phase.iter_mut().for_each(|v| *v = 0.0);
        for (h, &a) in params.alpha_row(w).iter().enumerate() {
            if a != 0.0 {
                for (ph, s) in phase.iter_mut().zip(&sines[h * n..(h + 1) * n]) {
                    *ph += a * s;
                }
            }
        }
        out.extend(phase.iter().map(|&ph| Complex64::from_polar(amp, ph)));
    }
    out
}

/// `R = X X^H`.
pub fn correlation(x: &WaveformSet) -> Result<CorrelationMatrix> {
    CorrelationMatrix::new(x.samples().gram())
}

/// Centered second moment of the power spectrum in Hz^2, with DFT bins mapped
/// to `(-fs/2, fs/2]`.
pub fn rms_bandwidth(x: &[Complex64], sample_rate: f64) -> Result<f64> {
    if x.is_empty() {
        return invalid("waveform is empty");
    }
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return invalid("sample rate must be positive");
    }
    if x.iter().map(|z| z.norm_sqr()).sum::<f64>() == 0.0 {
        return invalid("zero-energy waveform has no RMS bandwidth");
    }
    let spec = Spectrum::new(x.len(), sample_rate);
    Ok(spec.beta_sq(x, None, &[]))
}

/// Reference `beta^2` for a flat spectrum of width `fs / 5`.
pub fn reference_beta_sq(sample_rate: f64) -> f64 {
    (sample_rate / 5.0).powi(2) / 12.0
}

struct Spectrum {
    n: usize,
    freqs: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Spectrum {
    fn new(n: usize, fs: f64) -> Self {
        let mut planner = FftPlanner::new();
        let freqs = (0..n)
            .map(|k| {
                let k = if 2 * k > n { k as f64 - n as f64 } else { k as f64 };
                k * fs / n as f64
            })
            .collect();
        Self {
            n,
            freqs,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    /// `beta^2` of `x`; with `grad`, also `d beta^2 / d alpha_p` using the sine
    /// table `sines` (P rows of length N).
    fn beta_sq(&self, x: &[Complex64], grad: Option<&mut [f64]>, sines: &[f64]) -> f64 {
        let mut buf = x.to_vec();
        self.fwd.process(&mut buf);
        let pow: Vec<f64> = buf.iter().map(|z| z.norm_sqr()).collect();
        let total: f64 = pow.iter().sum();
        let mean = pow.iter().zip(&self.freqs).map(|(p, f)| p * f).sum::<f64>() / total;
        let second = pow.iter().zip(&self.freqs).map(|(p, f)| p * f * f).sum::<f64>() / total;
        let beta = second - mean * mean;
        if let Some(g) = grad {
            for (z, &f) in buf.iter_mut().zip(&self.freqs) {
                *z *= f * f - 2.0 * mean * f;
            }
            // unnormalized inverse = F^H
            self.inv.process(&mut buf);
            phase_gradient(x, &buf, sines, self.n, -2.0 / total, g);
        }
        beta
    }
}

/// `out[p] = factor * sum_n S[p][n] Im(x[n] conj(w[n]))`.
fn phase_gradient(x: &[Complex64], w: &[Complex64], sines: &[f64], n: usize, factor: f64, out: &mut [f64]) {
    let im: Vec<f64> = x.iter().zip(w).map(|(a, b)| (a * b.conj()).im).collect();
    for (h, o) in out.iter_mut().enumerate() {
        *o = factor * sines[h * n..(h + 1) * n].iter().zip(&im).map(|(s, v)| s * v).sum::<f64>();
    }
}

/// Gradient source used by the optimizers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    #[default]
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Relative RMS-bandwidth tolerance, in (0, 1).
    pub mu: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub gradient_mode: GradientMode,
    pub sample_rate: f64,
    /// Initial penalty weight, relative to the starting objective.
    pub penalty_weight: f64,
    /// Iterations between penalty doublings.
    pub penalty_interval: usize,
    /// Penalty acts outside `(1 +- inner_fraction * mu)`; the hard wall is at `mu`.
    pub inner_fraction: f64,
    /// Stop when the objective changes by less than `stall_tol` (relative)
    /// over `stall_window` iterations.
    pub stall_window: usize,
    pub stall_tol: f64,
    pub fd_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            mu: 0.1,
            max_iter: 2000,
            seed: 0,
            gradient_mode: GradientMode::Analytic,
            sample_rate: DEFAULT_SAMPLE_RATE,
            penalty_weight: 1.0,
            penalty_interval: 50,
            inner_fraction: 0.9,
            stall_window: 10,
            stall_tol: 1e-12,
            fd_step: 1e-6,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return invalid(format!("mu must lie in (0, 1), got {}", self.mu));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return invalid("sample_rate must be positive");
        }
        if !(self.penalty_weight > 0.0) || self.penalty_interval == 0 {
            return invalid("penalty schedule needs a positive weight and interval");
        }
        if !(self.inner_fraction > 0.0 && self.inner_fraction <= 1.0) {
            return invalid("inner_fraction must lie in (0, 1]");
        }
        if self.stall_window == 0 || !(self.stall_tol >= 0.0) || !(self.fd_step > 0.0) {
            return invalid("invalid stopping or finite-difference parameters");
        }
        Ok(())
    }
}

/// Random phase coefficients `U(-2/P, 2/P)`, each waveform then scaled so its
/// `beta^2` equals [`reference_beta_sq`].
pub fn seeded_init(m: usize, n: usize, p: usize, energy: f64, seed: u64, sample_rate: f64) -> Result<MtsfmParams> {
    let base = MtsfmParams::zeros(m, n, p, energy)?;
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return invalid("sample rate must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = 2.0 / p as f64;
    let raw: Vec<f64> = (0..m * p).map(|_| rng.gen_range(-c..c)).collect();
    let target = reference_beta_sq(sample_rate);
    let sines = sine_table(n, p);
    let spec = Spectrum::new(n, sample_rate);
    let mut alpha = Vec::with_capacity(m * p);
    for w in 0..m {
        let row = &raw[w * p..(w + 1) * p];
        let s = scale_to_beta(&spec, &sines, row, target)
            .ok_or_else(|| Error::InvalidInput("could not reach the reference RMS bandwidth".into()))?;
        alpha.extend(row.iter().map(|a| a * s));
    }
    Ok(base.with_alpha(alpha))
}

fn scaled_row_beta(spec: &Spectrum, sines: &[f64], row: &[f64], s: f64) -> f64 {
    let n = spec.n;
    let x: Vec<Complex64> = (0..n)
        .map(|k| {
            let ph: f64 = row.iter().enumerate().map(|(h, a)| s * a * sines[h * n + k]).sum();
            Complex64::from_polar(1.0, ph)
        })
        .collect();
    spec.beta_sq(&x, None, &[])
}

/// Scale `s` with `beta^2(s * row) = target`, by bisection from `beta^2(0) = 0`.
fn scale_to_beta(spec: &Spectrum, sines: &[f64], row: &[f64], target: f64) -> Option<f64> {
    let (mut lo, mut hi) = (0.0, 1.0);
    while scaled_row_beta(spec, sines, row, hi) < target {
        hi *= 2.0;
        if hi > 1e6 {
            return None;
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if scaled_row_beta(spec, sines, row, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Shared evaluation state for one waveform-set shape.
struct Engine {
    m: usize,
    n: usize,
    p: usize,
    shape: MtsfmParams,
    sines: Vec<f64>,
    spectrum: Spectrum,
}

impl Engine {
    fn new(shape: &MtsfmParams, sample_rate: f64) -> Self {
        Self {
            m: shape.m,
            n: shape.n,
            p: shape.p,
            shape: shape.clone(),
            sines: sine_table(shape.n, shape.p),
            spectrum: Spectrum::new(shape.n, sample_rate),
        }
    }

    fn waveforms(&self, alpha: &[f64]) -> Vec<Complex64> {
        let params = MtsfmParams {
            alpha: alpha.to_vec(),
            ..self.shape.clone()
        };
        synth_flat(&params, &self.sines)
    }

    fn row<'a>(&self, x: &'a [Complex64], m: usize) -> &'a [Complex64] {
        &x[m * self.n..(m + 1) * self.n]
    }

    fn gram(&self, x: &[Complex64]) -> Vec<Complex64> {
        let m = self.m;
        let mut r = vec![Complex64::new(0.0, 0.0); m * m];
        for i in 0..m {
            for k in i..m {
                let v: Complex64 = self.row(x, i).iter().zip(self.row(x, k)).map(|(a, b)| a * b.conj()).sum();
                r[i * m + k] = v;
                r[k * m + i] = v.conj();
            }
        }
        r
    }

    fn betas(&self, x: &[Complex64]) -> Vec<f64> {
        (0..self.m).map(|w| self.spectrum.beta_sq(self.row(x, w), None, &[])).collect()
    }

    /// `sum_l (rhat_l - t_l)^2`.
    fn fit(&self, x: &[Complex64], target: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let m = self.m;
        let r = self.gram(x);
        let err: Vec<f64> = (0..m)
            .map(|l| (0..m - l).map(|i| r[i * m + i + l].re).sum::<f64>() - target[l])
            .collect();
        if let Some(g) = grad {
            let mut y = vec![Complex64::new(0.0, 0.0); self.n];
            for w in 0..m {
                y.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                for k in (0..m).filter(|&k| k != w) {
                    let e = err[w.abs_diff(k)];
                    for (yy, xk) in y.iter_mut().zip(self.row(x, k)) {
                        *yy += xk * e;
                    }
                }
                phase_gradient(self.row(x, w), &y, &self.sines, self.n, -2.0, &mut g[w * self.p..(w + 1) * self.p]);
            }
        }
        err.iter().map(|e| e * e).sum()
    }

    /// `(E/M) ||R - (E/M) I||_F^2`; the diagonal is fixed at `E/M`.
    fn orth(&self, x: &[Complex64], grad: Option<&mut [f64]>) -> f64 {
        let m = self.m;
        let scale = self.shape.energy / m as f64;
        let r = self.gram(x);
        let mut off = 0.0;
        for i in 0..m {
            for k in 0..m {
                let target = if i == k { scale } else { 0.0 };
                off += (r[i * m + k] - target).norm_sqr();
            }
        }
        if let Some(g) = grad {
            let mut z = vec![Complex64::new(0.0, 0.0); self.n];
            for w in 0..m {
                z.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                for k in (0..m).filter(|&k| k != w) {
                    let c = r[w * m + k];
                    for (zz, xk) in z.iter_mut().zip(self.row(x, k)) {
                        *zz += c * xk;
                    }
                }
                phase_gradient(
                    self.row(x, w),
                    &z,
                    &self.sines,
                    self.n,
                    -4.0 * scale,
                    &mut g[w * self.p..(w + 1) * self.p],
                );
            }
        }
        scale * off
    }
}

#[derive(Debug, Clone)]
enum Goal {
    Fit(Vec<f64>),
    Orthogonalize,
}

impl Goal {
    fn eval(&self, engine: &Engine, alpha: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let x = engine.waveforms(alpha);
        match self {
            Goal::Fit(t) => engine.fit(&x, t, grad),
            Goal::Orthogonalize => engine.orth(&x, grad),
        }
    }
}

/// Fit objective `sum_l (rhat_l - r_l)^2` with optional analytic gradient
/// (length `M P`, row-major like `alpha`).
pub fn fit_objective(target: &CosineCoeffs, params: &MtsfmParams, grad: Option<&mut [f64]>) -> Result<f64> {
    params.validate()?;
    if target.len() != params.m {
        return invalid(format!("target has {} coefficients for {} waveforms", target.len(), params.m));
    }
    check_grad_len(params, &grad)?;
    let engine = Engine::new(params, DEFAULT_SAMPLE_RATE);
    Ok(Goal::Fit(target.as_slice().to_vec()).eval(&engine, &params.alpha, grad))
}

/// Orthogonality objective `(E/M) ||R - (E/M) I||_F^2`.
pub fn orthogonality_objective(params: &MtsfmParams, grad: Option<&mut [f64]>) -> Result<f64> {
    params.validate()?;
    check_grad_len(params, &grad)?;
    let engine = Engine::new(params, DEFAULT_SAMPLE_RATE);
    Ok(Goal::Orthogonalize.eval(&engine, &params.alpha, grad))
}

/// `beta^2` of waveform `m` and its gradient with respect to that waveform's
/// `P` coefficients.
pub fn rms_bandwidth_gradient(params: &MtsfmParams, m: usize, sample_rate: f64, grad: &mut [f64]) -> Result<f64> {
    params.validate()?;
    if m >= params.m || grad.len() != params.p {
        return invalid("waveform index or gradient length out of range");
    }
    let engine = Engine::new(params, sample_rate);
    let x = engine.waveforms(&params.alpha);
    Ok(engine.spectrum.beta_sq(engine.row(&x, m), Some(grad), &engine.sines))
}

fn check_grad_len(params: &MtsfmParams, grad: &Option<&mut [f64]>) -> Result<()> {
    match grad {
        Some(g) if g.len() != params.m * params.p => invalid("gradient buffer has the wrong length"),
        _ => Ok(()),
    }
}

/// Minimizes the coefficient mismatch against `target` under the RMS-bandwidth
/// band constraint.
///
/// `r_0` of any MTSFM set equals `E`, so the target is rescaled by
/// `E / target.r0` before fitting; the report's pattern deviation compares
/// against the rescaled target.
pub fn fit_coeffs(target: &CosineCoeffs, init: &MtsfmParams, cfg: &OptimizerConfig) -> Result<(MtsfmParams, DesignReport)> {
    init.validate()?;
    if target.len() != init.m {
        return invalid(format!("target has {} coefficients but init has {} waveforms", target.len(), init.m));
    }
    if !(target.r0() > 0.0) {
        return invalid("target r_0 must be positive");
    }
    let scaled = target.scaled(init.energy / target.r0());
    let (best, mut report) = optimize(Goal::Fit(scaled.as_slice().to_vec()), init, cfg)?;
    let x = synthesize(&best);
    let grid = default_grid(DEFAULT_GRID_SIZE);
    let achieved = pattern_from_matrix(&correlation(&x)?, &grid)?;
    let ideal = pattern_from_coeffs(&scaled, &grid)?;
    report.pattern_deviation = Some(achieved.max_abs_difference(&ideal)?);
    Ok((best, report))
}

/// Drives the set toward `R = (E/M) I` under the RMS-bandwidth band constraint.
pub fn orthogonalize(init: &MtsfmParams, cfg: &OptimizerConfig) -> Result<(MtsfmParams, DesignReport)> {
    init.validate()?;
    let (best, mut report) = optimize(Goal::Orthogonalize, init, cfg)?;
    let r = correlation(&synthesize(&best))?;
    report.off_diagonal_ratio = Some(off_diagonal_ratio(&r));
    Ok((best, report))
}

/// Peak `|R_mk|`, `m != k`, over the mean diagonal entry.
pub fn off_diagonal_ratio(r: &CorrelationMatrix) -> f64 {
    let m = r.size();
    let mat = r.matrix();
    let diag = r.trace_energy() / m as f64;
    let mut peak = 0.0f64;
    for i in 0..m {
        for k in 0..m {
            if i != k {
                peak = peak.max(mat[(i, k)].norm());
            }
        }
    }
    peak / diag
}

/// Rescales each row whose `beta^2` left the inner band back onto its edge.
fn pull_into_band(engine: &Engine, alpha: &[f64], beta0: &[f64], inner: f64) -> Vec<f64> {
    let p = engine.p;
    let betas = engine.betas(&engine.waveforms(alpha));
    let mut out = alpha.to_vec();
    for (k, (b, b0)) in betas.iter().zip(beta0).enumerate() {
        let dev = b / b0 - 1.0;
        if dev.abs() <= inner {
            continue;
        }
        let row = &alpha[k * p..(k + 1) * p];
        if let Some(s) = scale_to_beta(&engine.spectrum, &engine.sines, row, b0 * (1.0 + inner * dev.signum())) {
            out[k * p..(k + 1) * p].iter_mut().zip(row).for_each(|(o, a)| *o = a * s);
        }
    }
    out
}

const MAX_ESCAPES: usize = 8;
const ESCAPE_GROWTH: f64 = 4.0;

fn optimize(goal: Goal, init: &MtsfmParams, cfg: &OptimizerConfig) -> Result<(MtsfmParams, DesignReport)> {
    cfg.validate()?;
    let engine = Engine::new(init, cfg.sample_rate);
    let x0 = engine.waveforms(&init.alpha);
    let beta0 = engine.betas(&x0);
    if let Some(w) = beta0.iter().position(|b| !(*b > 0.0) || !b.is_finite()) {
        return invalid(format!(
            "waveform {w} has zero RMS bandwidth, so the (1 +- mu) band is empty; start from nonzero alpha"
        ));
    }
    let mu = cfg.mu;
    let inner = cfg.inner_fraction * mu;
    let (m, p) = (engine.m, engine.p);

    let band_violation = |alpha: &[f64]| -> f64 {
        let x = engine.waveforms(alpha);
        engine
            .betas(&x)
            .iter()
            .zip(&beta0)
            .map(|(b, b0)| (b / b0 - 1.0).abs())
            .fold(0.0, f64::max)
    };
    let feasible = |alpha: &[f64]| band_violation(alpha) < mu;

    let f0 = goal.eval(&engine, &init.alpha, None);
    let floor = 1e-28 * init.energy * init.energy;
    let weight = Cell::new(cfg.penalty_weight * f0.max(floor));
    let last_raw = Cell::new(f0);

    // objective + weight * sum_m max(0, |beta_m/beta0_m - 1| - inner)^2
    let analytic = |alpha: &[f64], grad: &mut [f64]| -> f64 {
        let x = engine.waveforms(alpha);
        let raw = match &goal {
            Goal::Fit(t) => engine.fit(&x, t, Some(grad)),
            Goal::Orthogonalize => engine.orth(&x, Some(grad)),
        };
        last_raw.set(raw);
        let w = weight.get();
        let mut pen = 0.0;
        let mut gb = vec![0.0; p];
        for k in 0..m {
            let b = engine.spectrum.beta_sq(engine.row(&x, k), Some(&mut gb), &engine.sines);
            let dev = b / beta0[k] - 1.0;
            let excess = dev.abs() - inner;
            if excess > 0.0 {
                pen += excess * excess;
                let coef = w * 2.0 * excess * dev.signum() / beta0[k];
                for (g, d) in grad[k * p..(k + 1) * p].iter_mut().zip(&gb) {
                    *g += coef * d;
                }
            }
        }
        raw + w * pen
    };
    let value_only = |alpha: &[f64]| -> f64 {
        let x = engine.waveforms(alpha);
        let raw = match &goal {
            Goal::Fit(t) => engine.fit(&x, t, None),
            Goal::Orthogonalize => engine.orth(&x, None),
        };
        let pen: f64 = engine
            .betas(&x)
            .iter()
            .zip(&beta0)
            .map(|(b, b0)| ((b / b0 - 1.0).abs() - inner).max(0.0).powi(2))
            .sum();
        raw + weight.get() * pen
    };
    let raw_only = |alpha: &[f64]| goal.eval(&engine, alpha, None);
    let fd_step = cfg.fd_step;
    let mut objective = |alpha: &[f64], grad: &mut [f64]| -> f64 {
        match cfg.gradient_mode {
            GradientMode::Analytic => analytic(alpha, grad),
            GradientMode::FiniteDifference => {
                let g = central_difference(&value_only, alpha, fd_step);
                grad.copy_from_slice(&g);
                last_raw.set(raw_only(alpha));
                value_only(alpha)
            }
        }
    };

    let mut report = DesignReport {
        seed: Some(cfg.seed),
        objective_initial: Some(f0),
        ..Default::default()
    };
    let mut best_alpha = init.alpha.clone();
    let mut best = f0;
    let mut trace = vec![f0];
    let mut iterations = 0;
    let mut converged = f0 <= floor;

    if !converged {
        let opts = BfgsOptions {
            initial_step: 0.1 / p as f64,
            ..Default::default()
        };
        let mut opt = Bfgs::new(init.alpha.clone(), &mut objective, opts);
        let mut history = vec![f0];
        let mut escapes = 0;
        while iterations < cfg.max_iter {
            if iterations > 0 && iterations % cfg.penalty_interval == 0 {
                weight.set(weight.get() * 2.0);
                opt.refresh(&mut objective);
            }
            iterations += 1;
            let mut stuck = opt.step(&mut objective, &feasible) == StepOutcome::Stalled;
            if !stuck {
                let raw = last_raw.get();
                if raw < best {
                    best = raw;
                    best_alpha = opt.x().to_vec();
                }
                history.push(raw);
                if iterations % cfg.penalty_interval == 0 {
                    trace.push(raw);
                }
                if best <= floor {
                    converged = true;
                    break;
                }
                if history.len() > cfg.stall_window {
                    let old = history[history.len() - 1 - cfg.stall_window];
                    stuck = (old - raw).abs() <= cfg.stall_tol * old.abs();
                }
            }
            if stuck {
                // Creeping along the veto: pull back into the band, stiffen the
                // penalty and restart the curvature estimate.
                if escapes == MAX_ESCAPES || band_violation(opt.x()) <= inner {
                    break;
                }
                escapes += 1;
                weight.set(weight.get() * ESCAPE_GROWTH);
                let pulled = pull_into_band(&engine, opt.x(), &beta0, inner);
                opt = Bfgs::new(pulled, &mut objective, opts);
                history.clear();
            }
        }
    }
    if trace.last() != Some(&best) {
        trace.push(best);
    }

    let result = init.with_alpha(best_alpha);
    let xb = engine.waveforms(&result.alpha);
    let ratios: Vec<f64> = engine.betas(&xb).iter().zip(&beta0).map(|(b, b0)| b / b0).collect();
    report.objective_final = Some(best);
    report.objective_trace = Some(trace);
    report.iterations = Some(iterations);
    report.converged = Some(converged);
    report.constraint_residual = Some(band_violation(&result.alpha));
    report.bandwidth_ratio_min = ratios.iter().cloned().reduce(f64::min);
    report.bandwidth_ratio_max = ratios.iter().cloned().reduce(f64::max);
    Ok((result, report))
}
