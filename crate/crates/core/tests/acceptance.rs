//! Acceptance criteria, one test per criterion. Each check prints a PASS/FAIL
//! line; a test fails if any of its checks fail.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use beamforge::cheb_design::{lp_minimax_on_grid, remez_on_grid};
use beamforge::linalg::CMatrix;
use beamforge::mtsfm::{
    fit_objective, off_diagonal_ratio, orthogonality_objective, rms_bandwidth_gradient, DEFAULT_HARMONICS,
    DEFAULT_SAMPLES,
};
use beamforge::optim::central_difference;
use beamforge::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Checks {
    criterion: u32,
    failed: Vec<String>,
}

impl Checks {
    fn new(criterion: u32) -> Self {
        Self {
            criterion,
            failed: Vec::new(),
        }
    }

    fn check(&mut self, name: &str, ok: bool, detail: String) {
        let tag = if ok { "PASS" } else { "FAIL" };
        // straight to the stderr handle so the line survives libtest's capture
        let _ = writeln!(std::io::stderr(), "{tag} criterion {} {name}: {detail}", self.criterion);
        if !ok {
            self.failed.push(name.to_string());
        }
    }

    fn finish(self) {
        assert!(self.failed.is_empty(), "criterion {} failed: {:?}", self.criterion, self.failed);
    }
}

fn example_one() -> BandSpec {
    BandSpec::from_normalized(0.2, 0.4, 1.0, 0.05).unwrap()
}

fn example_two() -> BandSpec {
    BandSpec::from_normalized(0.2, 0.4, 1.0, 0.000339).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn grid() -> Vec<f64> {
    default_grid(DEFAULT_GRID_SIZE)
}

#[test]
fn criterion_1_example_one() {
    let mut c = Checks::new(1);
    let start = Instant::now();
    let spec = example_one();
    let res = remez_design(10, &spec, DEFAULT_GRID_DENSITY).unwrap();
    let r = toeplitz_from_coeffs(&res.coeffs).unwrap();
    let psd = is_psd(&r, 1e-12).unwrap();
    let m = metrics(&pattern_from_matrix(&r, &grid()).unwrap(), &spec).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    c.check(
        "delta within 5% of 0.0112",
        rel(res.delta, 0.0112) <= 0.05,
        format!("delta = {:.6} ({:+.2}%)", res.delta, 100.0 * (res.delta / 0.0112 - 1.0)),
    );
    c.check(
        "Toeplitz realization is PSD",
        psd.is_psd,
        format!("min eigenvalue = {:.3e}", psd.min_eigenvalue),
    );
    c.check(
        "stopband peak within 0.1 dB of -12.1 dB",
        (m.stopband_peak_db + 12.1).abs() <= 0.1,
        format!("{:.3} dB", m.stopband_peak_db),
    );
    c.check("runtime under 1 s", elapsed < 1.0, format!("{elapsed:.3} s"));
    c.finish();
}

#[test]
fn criterion_2_example_two() {
    let mut c = Checks::new(2);
    let start = Instant::now();
    let spec = example_two();
    let res = remez_design(20, &spec, DEFAULT_GRID_DENSITY).unwrap();
    let t = toeplitz_from_coeffs(&res.coeffs).unwrap();
    let t_psd = is_psd(&t, 1e-12).unwrap();
    let fit = psd_fit_with(&res.coeffs, &PsdFitOptions::default()).unwrap();
    let fit_psd = is_psd(&fit.matrix, 1e-10).unwrap();
    let sums = diagonal_sums(&fit.matrix).unwrap();
    let resid = sums
        .as_slice()
        .iter()
        .zip(res.coeffs.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / res.coeffs.r0();
    let w = tbp_weights(&fit.matrix).unwrap();
    let norm = fit.matrix.matrix().frobenius_norm();
    let fact = w.correlation().sub(fit.matrix.matrix()).frobenius_norm() / norm;
    let ww = CorrelationMatrix::new(w.correlation()).unwrap();
    let m = metrics(&pattern_from_matrix(&ww, &grid()).unwrap(), &spec).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    c.check(
        "delta within 5% of 0.000339",
        rel(res.delta, 0.000339) <= 0.05,
        format!("delta = {:.7} ({:+.2}%)", res.delta, 100.0 * (res.delta / 0.000339 - 1.0)),
    );
    c.check(
        "Toeplitz candidate is not PSD",
        !t_psd.is_psd,
        format!("min eigenvalue = {:.3e}", t_psd.min_eigenvalue),
    );
    c.check(
        "psd_fit output is PSD",
        fit_psd.is_psd,
        format!("min eigenvalue = {:.3e}, {} iterations", fit_psd.min_eigenvalue, fit.iterations),
    );
    c.check("diagonal-sum residual <= 1e-6", resid <= 1e-6, format!("{resid:.3e}"));
    c.check("TBP factorization error <= 1e-10", fact <= 1e-10, format!("{fact:.3e}"));
    c.check(
        "stopband peak within 0.1 dB of -31.7 dB",
        (m.stopband_peak_db + 31.7).abs() <= 0.1,
        format!("{:.3} dB", m.stopband_peak_db),
    );
    c.check("runtime under 30 s", elapsed < 30.0, format!("{elapsed:.3} s"));
    c.finish();
}

#[test]
fn criterion_3_kaiser_formula() {
    let mut c = Checks::new(3);
    let m1 = estimate_elements(0.0112, &example_one()).unwrap();
    let m2 = estimate_elements(0.000339, &example_two()).unwrap();
    c.check("estimate_elements(0.0112) = 10", m1 == 10, format!("{m1}"));
    c.check("estimate_elements(0.000339) = 20", m2 == 20, format!("{m2}"));
    let mut worst = 0usize;
    for spec in [example_one(), BandSpec::from_normalized(0.1, 0.35, 1.0, 0.01).unwrap()] {
        for m in 2..=40 {
            let back = estimate_elements(estimate_ripple(m, &spec), &spec).unwrap();
            worst = worst.max(back.abs_diff(m));
        }
    }
    c.check("round trip within 1 element for M = 2..40", worst <= 1, format!("max |dM| = {worst}"));
    c.finish();
}

#[test]
fn criterion_4_oracle_equivalence() {
    let mut c = Checks::new(4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..10 {
        let m = rng.gen_range(4..=16);
        let up = rng.gen_range(0.1..0.5);
        let us = up + rng.gen_range(0.1..0.3);
        let eps0 = rng.gen_range(0.0..0.1);
        let spec = BandSpec::from_normalized(up, us, 1.0, eps0).unwrap();
        let g = ApproxGrid::proportional(&spec.bands(), 4096).unwrap();
        let remez = remez_on_grid(m, &g).unwrap();
        let lp = lp_minimax_on_grid(m, &g).unwrap();
        let lp_delta = g.max_weighted_error(&lp);
        let d = rel(remez.delta, lp_delta);
        c.check(
            &format!("case {case} delta agreement <= 0.1%"),
            d <= 1e-3,
            format!(
                "M = {m}, u_p = {up:.3}pi, u_s = {us:.3}pi, eps0 = {eps0:.4}: remez {:.9e}, lp {lp_delta:.9e}, rel {d:.2e}",
                remez.delta
            ),
        );
    }
    c.finish();
}

fn random_symmetric(rng: &mut ChaCha8Rng, m: usize) -> CorrelationMatrix {
    let mut a = CMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = rng.gen_range(-1.0..1.0);
            a[(i, j)] = Complex64::new(v, 0.0);
            a[(j, i)] = Complex64::new(v, 0.0);
        }
        // keep the diagonal nonnegative as a correlation matrix requires
        a[(i, i)].re = a[(i, i)].re.abs();
    }
    CorrelationMatrix::new(a).unwrap()
}

#[test]
fn criterion_5_representation_identity() {
    let mut c = Checks::new(5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let angles = grid();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let m = rng.gen_range(1..=32);
        let r = random_symmetric(&mut rng, m);
        let from_matrix = pattern_from_matrix(&r, &angles).unwrap();
        let from_coeffs = pattern_from_coeffs(&diagonal_sums(&r).unwrap(), &angles).unwrap();
        // |P(u)| <= sum |R_ij| bounds the magnitude scale of every sample
        let scale: f64 = r.matrix().as_slice().iter().map(|z| z.norm()).sum();
        for (a, b) in from_matrix.values.iter().zip(&from_coeffs.values) {
            worst = worst.max((a - b).abs() / b.abs().max(scale));
        }
    }
    c.check("pointwise agreement <= 1e-10 relative", worst <= 1e-10, format!("worst {worst:.2e} over 100 matrices"));
    c.finish();
}

#[test]
fn criterion_6_mtsfm_fit() {
    let mut c = Checks::new(6);
    let start = Instant::now();
    let spec = example_one();
    let design = remez_design(10, &spec, DEFAULT_GRID_DENSITY).unwrap();
    let energy = 1.0;
    let cfg = OptimizerConfig::default();
    let init = seeded_init(10, DEFAULT_SAMPLES, DEFAULT_HARMONICS, energy, cfg.seed, cfg.sample_rate).unwrap();
    let (best, report) = fit_coeffs(&design.coeffs, &init, &cfg).unwrap();
    let x = synthesize(&best);
    let mut pattern = pattern_from_waveforms(&x, &grid()).unwrap();
    // the set carries E = 1 while the design has r_0 != 1; compare at design scale
    let to_design = design.coeffs.r0() / energy;
    pattern.values.iter_mut().for_each(|v| *v *= to_design);
    let m = metrics(&pattern, &spec).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    let amp = (energy / (10.0 * DEFAULT_SAMPLES as f64)).sqrt();
    let envelope = x
        .samples()
        .as_slice()
        .iter()
        .map(|z| (z.norm() - amp).abs() / amp)
        .fold(0.0, f64::max);
    let mut ratio_dev = 0.0f64;
    for w in 0..10 {
        let b0 = rms_bandwidth(synthesize(&init).waveform(w), cfg.sample_rate).unwrap();
        let b = rms_bandwidth(x.waveform(w), cfg.sample_rate).unwrap();
        ratio_dev = ratio_dev.max((b / b0 - 1.0).abs());
    }

    c.check(
        "stopband peak within 0.5 dB of -12.1 dB",
        (m.stopband_peak_db + 12.1).abs() <= 0.5,
        format!(
            "{:.3} dB (objective {:.3e} -> {:.3e}, {} iterations)",
            m.stopband_peak_db,
            report.objective_initial.unwrap(),
            report.objective_final.unwrap(),
            report.iterations.unwrap()
        ),
    );
    c.check(
        "passband ripple <= 2 delta",
        m.passband_ripple <= 2.0 * design.delta,
        format!("ripple {:.4e}, delta {:.4e}", m.passband_ripple, design.delta),
    );
    c.check("envelope constant", envelope <= 1e-12, format!("max relative envelope error {envelope:.1e}"));
    c.check(
        "beta^2 within (1 +- 0.1) of initial",
        ratio_dev < 0.1,
        format!("max |beta^2/beta0^2 - 1| = {ratio_dev:.4}"),
    );
    c.check("runtime under 10 min", elapsed < 600.0, format!("{elapsed:.1} s"));
    c.finish();
}

#[test]
fn criterion_7_orthogonalization() {
    let mut c = Checks::new(7);
    let m = 20;
    // E = M puts the orthogonal set at R = I, so W W^H is the transmitted correlation
    let energy = m as f64;
    let cfg = OptimizerConfig::default();
    let init = seeded_init(m, DEFAULT_SAMPLES, DEFAULT_HARMONICS, energy, cfg.seed, cfg.sample_rate).unwrap();
    let (best, report) = orthogonalize(&init, &cfg).unwrap();
    let x = synthesize(&best);
    let r = correlation(&x).unwrap();
    let ratio = off_diagonal_ratio(&r);
    c.check(
        "peak off-diagonal <= 5e-4 (E/M)",
        ratio <= 5e-4,
        format!(
            "{ratio:.3e} (initial objective {:.3e}, final {:.3e}, {} iterations, constraint residual {:.4})",
            report.objective_initial.unwrap(),
            report.objective_final.unwrap(),
            report.iterations.unwrap(),
            report.constraint_residual.unwrap()
        ),
    );

    let spec = example_two();
    let design = remez_design(m, &spec, DEFAULT_GRID_DENSITY).unwrap();
    let fit = psd_fit_with(&design.coeffs, &PsdFitOptions::default()).unwrap();
    let w = tbp_weights(&fit.matrix).unwrap();
    let mixed = apply_tbp(&w, &x).unwrap();
    let angles = grid();
    let achieved = pattern_from_waveforms(&mixed, &angles).unwrap();
    let ideal = pattern_from_matrix(&fit.matrix, &angles).unwrap();
    let mut worst = (0.0f64, 0.0f64);
    let mut worst_stop = 0.0f64;
    for ((&u, a), b) in angles.iter().zip(&achieved.values).zip(&ideal.values) {
        let d = (a - b).abs();
        if d > worst.0 {
            worst = (d, u);
        }
        if u.abs() >= spec.stopband_edge {
            worst_stop = worst_stop.max(d);
        }
    }
    c.check(
        "TBP pattern deviation <= 3 delta",
        worst.0 <= 3.0 * design.delta,
        format!(
            "max deviation {:.3e} at u = {:.3}pi (3 delta = {:.3e}); stopband max {:.3e}",
            worst.0,
            worst.1 / PI,
            3.0 * design.delta,
            worst_stop
        ),
    );
    let in_passband = worst.1.abs() <= spec.passband_edge;
    c.check(
        "largest deviation lies in the passband",
        in_passband,
        format!("|u| = {:.3}pi", worst.1.abs() / PI),
    );
    c.finish();
}

fn alternation_error(res: &RemezResult, spec: &BandSpec) -> f64 {
    let mut worst = 0.0f64;
    let mut prev_sign = 0.0;
    for &u in &res.extremal_angles {
        let (d, w) = if u <= spec.passband_edge + 1e-12 {
            (spec.passband_level, 1.0)
        } else {
            (spec.stopband_level, spec.weight_ratio)
        };
        let e = w * (res.coeffs.eval(u) - d);
        // relative to delta; below delta = 1e-4 P0 the coefficient round trip
        // (about 1e-13 absolute at M = 24) dominates, so the scale is floored there
        worst = worst.max((e.abs() - res.delta).abs() / res.delta.max(1e-4 * spec.passband_level));
        if prev_sign != 0.0 && e.signum() == prev_sign {
            return f64::INFINITY;
        }
        prev_sign = e.signum();
    }
    worst
}

#[test]
fn criterion_8_property_batteries() {
    let mut c = Checks::new(8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    let mut worst = 0.0f64;
    let mut not_converged = 0;
    for _ in 0..100 {
        let m = rng.gen_range(3..=24);
        let up: f64 = rng.gen_range(0.05..0.6);
        let us = (up + rng.gen_range(0.08..0.3)).min(0.95);
        let eps0 = rng.gen_range(0.0..0.2);
        let spec = BandSpec::from_normalized(up, us, 1.0, eps0).unwrap();
        let res = remez_design(m, &spec, DEFAULT_GRID_DENSITY).unwrap();
        if !res.converged {
            not_converged += 1;
        }
        worst = worst.max(alternation_error(&res, &spec));
    }
    c.check(
        "alternation (100 designs)",
        worst <= 1e-8 && not_converged == 0,
        format!("worst relative ripple spread {worst:.2e}, {not_converged} unconverged"),
    );

    let mut worst = 0.0f64;
    for _ in 0..100 {
        let m = rng.gen_range(1..=64);
        let r: Vec<f64> = (0..m).map(|l| if l == 0 { rng.gen_range(0.1..2.0) } else { rng.gen_range(-1.0..1.0) }).collect();
        let coeffs = CosineCoeffs::new(r.clone()).unwrap();
        let back = diagonal_sums(&toeplitz_from_coeffs(&coeffs).unwrap()).unwrap();
        for (a, b) in back.as_slice().iter().zip(&r) {
            worst = worst.max((a - b).abs());
        }
    }
    c.check("diagonal-sum round trip (100 vectors)", worst <= 1e-14, format!("max error {worst:.1e}"));

    let mut worst_resid = 0.0f64;
    let mut worst_eig = 0.0f64;
    let mut failures = 0;
    for _ in 0..100 {
        let m = rng.gen_range(2..=12);
        let k = rng.gen_range(1..=m);
        // coefficients of a realizable pattern: diagonal sums of B B^T
        let b = CMatrix::from_real_fn(m, k, |_, _| rng.gen_range(-1.0..1.0));
        let coeffs = diagonal_sums(&CorrelationMatrix::new(b.gram()).unwrap()).unwrap();
        match psd_fit_with(&coeffs, &PsdFitOptions::default()) {
            Ok(fit) => {
                worst_resid = worst_resid.max(fit.residual);
                worst_eig = worst_eig.min(fit.min_eigenvalue / coeffs.r0());
            }
            Err(_) => failures += 1,
        }
    }
    c.check(
        "PSD projection feasibility (100 fits)",
        failures == 0 && worst_resid <= 1e-8 && worst_eig >= -1e-8,
        format!("{failures} failures, worst residual {worst_resid:.2e}, worst min eigenvalue / r0 {worst_eig:.2e}"),
    );

    let mut worst = 0.0f64;
    for case in 0..100 {
        let m = rng.gen_range(1..=4);
        let p = rng.gen_range(1..=8);
        let n = rng.gen_range(2 * p + 1..=128);
        let alpha: Vec<f64> = (0..m * p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let params = MtsfmParams::new(m, n, p, rng.gen_range(0.5..4.0), alpha).unwrap();
        let target: Vec<f64> = (0..m).map(|l| if l == 0 { params.energy } else { rng.gen_range(-0.3..0.3) }).collect();
        let target = CosineCoeffs::new(target).unwrap();
        let mut g = vec![0.0; m * p];
        // alternate the two objectives and the bandwidth constraint
        let fd = match case % 3 {
            0 => {
                fit_objective(&target, &params, Some(&mut g)).unwrap();
                let f = |a: &[f64]| {
                    let q = MtsfmParams { alpha: a.to_vec(), ..params.clone() };
                    fit_objective(&target, &q, None).unwrap()
                };
                central_difference(&f, &params.alpha, 1e-6)
            }
            1 => {
                orthogonality_objective(&params, Some(&mut g)).unwrap();
                let f = |a: &[f64]| {
                    let q = MtsfmParams { alpha: a.to_vec(), ..params.clone() };
                    orthogonality_objective(&q, None).unwrap()
                };
                central_difference(&f, &params.alpha, 1e-6)
            }
            _ => {
                let w = rng.gen_range(0..m);
                g.truncate(p);
                rms_bandwidth_gradient(&params, w, 1.0, &mut g).unwrap();
                let f = |a: &[f64]| {
                    let mut alpha = params.alpha.clone();
                    alpha[w * p..(w + 1) * p].copy_from_slice(a);
                    let q = MtsfmParams { alpha, ..params.clone() };
                    rms_bandwidth(synthesize(&q).waveform(w), 1.0).unwrap()
                };
                central_difference(&f, params.alpha_row(w), 1e-6)
            }
        };
        // a single waveform makes both objectives constant; judge its zero
        // gradient against the objective scale E^2
        let scale = fd.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-6 * params.energy * params.energy);
        for (a, b) in g.iter().zip(&fd) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    c.check(
        "analytic vs central-difference gradients (100 points)",
        worst <= 1e-5,
        format!("worst relative error {worst:.2e}"),
    );

    let mut worst = 0.0f64;
    for _ in 0..100 {
        let m = rng.gen_range(2..=12);
        let p = rng.gen_range(1..=16);
        let n = rng.gen_range(2 * p + 1..=200);
        let energy = rng.gen_range(0.5..20.0);
        let alpha: Vec<f64> = (0..m * p).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let params = MtsfmParams::new(m, n, p, energy, alpha).unwrap();
        let r = correlation(&synthesize(&params)).unwrap();
        worst = worst.max(r.matrix().max_abs_imag() / (energy / m as f64));
    }
    c.check(
        "sine-only sets have real correlation (100 sets)",
        worst <= 1e-10,
        format!("max |Im R| / (E/M) = {worst:.2e}"),
    );
    c.finish();
}

/// Stopband peak (dB) at which the Toeplitz realization stops being PSD while
/// the stopband level is lowered at fixed edges.
fn psd_flip_level(m: usize) -> Option<(f64, f64)> {
    let mut last_psd: Option<f64> = None;
    let mut eps0 = 0.2;
    while eps0 > 1e-4 {
        let spec = BandSpec::from_normalized(0.2, 0.4, 1.0, eps0).unwrap();
        let res = remez_design(m, &spec, DEFAULT_GRID_DENSITY).unwrap();
        let peak_db = 10.0 * (eps0 + res.delta).log10();
        let psd = is_psd(&toeplitz_from_coeffs(&res.coeffs).unwrap(), 1e-12).unwrap().is_psd;
        match (psd, last_psd) {
            (true, _) => last_psd = Some(peak_db),
            (false, Some(prev)) => return Some((prev, peak_db)),
            (false, None) => return None,
        }
        eps0 *= 0.97;
    }
    None
}

#[test]
fn criterion_9_psd_boundary() {
    let mut c = Checks::new(9);
    for m in [10, 14, 20] {
        let flip = psd_flip_level(m);
        let (ok, detail) = match flip {
            Some((psd_db, not_db)) => (
                (-15.0..=-12.0).contains(&psd_db) && (-15.0..=-12.0).contains(&not_db),
                format!("last PSD at {psd_db:.2} dB, first non-PSD at {not_db:.2} dB"),
            ),
            None => (false, "no PSD-to-indefinite transition found".into()),
        };
        c.check(&format!("M = {m} flips inside [-15, -12] dB"), ok, detail);
    }
    c.finish();
}
