//! Transmit beampatterns `P(u) = a(u)^H R a(u)` of a half-wavelength ULA.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cheb_design::{BandSpec, CosineCoeffs};
use crate::corr_synth::CorrelationMatrix;
use crate::error::{invalid, Error, Result};
use crate::mtsfm::{correlation, WaveformSet};

pub const DEFAULT_GRID_SIZE: usize = 4096;

const QUAD_FORM_IMAG_TOL: f64 = 1e-12;
const MIN_BAND_POINTS: usize = 16;

/// `a(u)` with entries `exp(j m u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub u: f64,
    pub entries: Vec<Complex64>,
}

pub fn steering_vector(u: f64, m: usize) -> Result<SteeringVector> {
    if m == 0 {
        return invalid("steering vector needs at least one element");
    }
    let entries = (0..m).map(|k| Complex64::from_polar(1.0, k as f64 * u)).collect();
    Ok(SteeringVector { u, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternSource {
    Matrix,
    Coeffs,
    Waveforms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSamples {
    pub angles: Vec<f64>,
    pub values: Vec<f64>,
    pub source: PatternSource,
}

impl PatternSamples {
    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max_k |P_k - Q_k|`, requiring identical grids.
    pub fn max_abs_difference(&self, other: &PatternSamples) -> Result<f64> {
        if self.angles != other.angles {
            return invalid("patterns sampled on different grids");
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// `n` uniform angles `-pi + 2 pi k / n`, so the grid is periodic with `u = 0`
/// included for even `n`.
pub fn default_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| -PI + 2.0 * PI * k as f64 / n as f64).collect()
}

fn check_grid(angles: &[f64]) -> Result<()> {
    if angles.is_empty() {
        return invalid("angle grid is empty");
    }
    if angles.iter().any(|u| !u.is_finite()) {
        return invalid("angle grid has non-finite entries");
    }
    Ok(())
}

pub fn pattern_from_matrix(r: &CorrelationMatrix, angles: &[f64]) -> Result<PatternSamples> {
    check_grid(angles)?;
    let mat = r.matrix();
    mat.check_hermitian(QUAD_FORM_IMAG_TOL)?;
    let m = r.size();
    let scale = mat.frobenius_norm();
    let mut values = Vec::with_capacity(angles.len());
    let mut ra = vec![Complex64::new(0.0, 0.0); m];
    for &u in angles {
        let a = steering_vector(u, m)?.entries;
        for i in 0..m {
            ra[i] = mat.row(i).iter().zip(&a).map(|(x, y)| x * y).sum();
        }
        let q: Complex64 = a.iter().zip(&ra).map(|(x, y)| x.conj() * y).sum();
        let tol = QUAD_FORM_IMAG_TOL * (m as f64) * scale.max(q.re.abs());
        if q.im.abs() > tol.max(f64::MIN_POSITIVE) {
            return Err(Error::ImaginaryResidue {
                residue: q.im.abs(),
                tolerance: tol,
            });
        }
        values.push(q.re);
    }
    Ok(PatternSamples {
        angles: angles.to_vec(),
        values,
        source: PatternSource::Matrix,
    })
}

pub fn pattern_from_coeffs(coeffs: &CosineCoeffs, angles: &[f64]) -> Result<PatternSamples> {
    check_grid(angles)?;
    Ok(PatternSamples {
        angles: angles.to_vec(),
        values: angles.iter().map(|&u| coeffs.eval(u)).collect(),
        source: PatternSource::Coeffs,
    })
}

/// Pattern of a transmitted waveform set, through `R = X X^H`.
pub fn pattern_from_waveforms(x: &WaveformSet, angles: &[f64]) -> Result<PatternSamples> {
    let mut p = pattern_from_matrix(&correlation(x)?, angles)?;
    p.source = PatternSource::Waveforms;
    Ok(p)
}

/// Ripple and sidelobe figures of a sampled pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternMetrics {
    pub passband_ripple: f64,
    pub stopband_peak: f64,
    pub stopband_peak_db: f64,
    pub transition_width: f64,
}

/// Band membership uses `|u|`, so both halves of a symmetric grid count.
pub fn metrics(samples: &PatternSamples, spec: &BandSpec) -> Result<PatternMetrics> {
    spec.validate()?;
    let mut ripple = 0.0f64;
    let mut peak = f64::NEG_INFINITY;
    let (mut n_pass, mut n_stop) = (0usize, 0usize);
    for (&u, &p) in samples.angles.iter().zip(&samples.values) {
        let a = u.abs();
        if a <= spec.passband_edge {
            n_pass += 1;
            ripple = ripple.max((p - spec.passband_level).abs());
        } else if a >= spec.stopband_edge && a <= PI {
            n_stop += 1;
            peak = peak.max(p);
        }
    }
    if n_pass < MIN_BAND_POINTS || n_stop < MIN_BAND_POINTS {
        return invalid(format!(
            "grid covers {n_pass} passband and {n_stop} stopband points, need {MIN_BAND_POINTS} each"
        ));
    }
    let stopband_peak_db = 10.0 * (peak / spec.passband_level).log10();
    Ok(PatternMetrics {
        passband_ripple: ripple,
        stopband_peak: peak,
        stopband_peak_db,
        transition_width: spec.transition_width(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CMatrix;
    use approx::assert_relative_eq;

    fn close(a: Complex64, re: f64, im: f64) -> bool {
        (a.re - re).abs() < 1e-15 && (a.im - im).abs() < 1e-15
    }

    #[test]
    fn steering_examples() {
        assert!(steering_vector(0.0, 4).unwrap().entries.iter().all(|z| close(*z, 1.0, 0.0)));
        let e = steering_vector(PI, 2).unwrap().entries;
        assert!(close(e[0], 1.0, 0.0) && close(e[1], -1.0, 0.0));
        let e = steering_vector(PI / 2.0, 3).unwrap().entries;
        assert!(close(e[1], 0.0, 1.0) && close(e[2], -1.0, 0.0));
        assert!(steering_vector(0.3, 0).is_err());
    }

    #[test]
    fn coherent_and_white_patterns() {
        let ones = CorrelationMatrix::new(CMatrix::from_real_fn(10, 10, |_, _| 0.1)).unwrap();
        let p = pattern_from_matrix(&ones, &[0.0]).unwrap();
        assert_relative_eq!(p.values[0], 10.0, epsilon = 1e-12);

        let white = CorrelationMatrix::new(CMatrix::from_real_fn(10, 10, |i, j| if i == j { 0.1 } else { 0.0 })).unwrap();
        let p = pattern_from_matrix(&white, &default_grid(64)).unwrap();
        assert!(p.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn coeff_patterns() {
        let c = CosineCoeffs::new(vec![1.0, 0.5]).unwrap();
        let p = pattern_from_coeffs(&c, &[PI]).unwrap();
        assert!(p.values[0].abs() < 1e-15);
        let c = CosineCoeffs::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(pattern_from_coeffs(&c, &default_grid(32)).unwrap().values.iter().all(|&v| v == 1.0));
        assert!(pattern_from_coeffs(&c, &[]).is_err());
    }

    #[test]
    fn flat_pattern_has_zero_ripple() {
        let spec = BandSpec::from_normalized(0.2, 0.4, 1.0, 0.05).unwrap();
        let c = CosineCoeffs::new(vec![1.0]).unwrap();
        let m = metrics(&pattern_from_coeffs(&c, &default_grid(512)).unwrap(), &spec).unwrap();
        assert_eq!(m.passband_ripple, 0.0);
        assert_eq!(m.stopband_peak_db, 0.0);
        assert_relative_eq!(m.transition_width, 0.2 * PI, epsilon = 1e-15);
    }

    #[test]
    fn metrics_need_band_coverage() {
        let spec = BandSpec::from_normalized(0.2, 0.4, 1.0, 0.05).unwrap();
        let c = CosineCoeffs::new(vec![1.0]).unwrap();
        assert!(metrics(&pattern_from_coeffs(&c, &default_grid(16)).unwrap(), &spec).is_err());
    }
}
