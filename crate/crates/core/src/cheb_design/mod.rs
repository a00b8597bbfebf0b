//! Equiripple cosine-series design.
//!
//! An even-symmetric beampattern of an `M`-element array is the cosine series
//! `P(u) = r_0 + 2 sum_{l=1}^{M-1} r_l cos(l u)`. Finding the `r_l` that best
//! approximate a flat passband / flat stopband target in the minimax sense is
//! a Type-I FIR design problem, solved here with a Remez exchange. An
//! independent linear-programming solution of the discretized problem is
//! provided for cross-checking.

mod oracle;
mod remez;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use oracle::{lp_minimax_oracle, lp_minimax_on_grid};
pub use remez::{remez_bands, remez_design, remez_on_grid, DEFAULT_GRID_DENSITY};

use std::f64::consts::PI;

/// Passband/stopband description of the desired beampattern.
///
/// Edges are spatial angles in radians; the desired response is
/// `passband_level` on `[0, u_p]` and `stopband_level` on `[u_s, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub passband_edge: f64,
    pub stopband_edge: f64,
    pub passband_level: f64,
    pub stopband_level: f64,
    /// Stopband error weight relative to the passband weight.
    pub weight_ratio: f64,
}

impl BandSpec {
    /// Builds a validated spec with unit weight ratio.
    pub fn new(passband_edge: f64, stopband_edge: f64, passband_level: f64, stopband_level: f64) -> Result<Self> {
        let spec = Self {
            passband_edge,
            stopband_edge,
            passband_level,
            stopband_level,
            weight_ratio: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Same as [`BandSpec::new`] with edges given in units of `pi`.
    pub fn from_normalized(up: f64, us: f64, passband_level: f64, stopband_level: f64) -> Result<Self> {
        Self::new(up * PI, us * PI, passband_level, stopband_level)
    }

    pub fn with_weight_ratio(mut self, weight_ratio: f64) -> Result<Self> {
        self.weight_ratio = weight_ratio;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.passband_edge,
            self.stopband_edge,
            self.passband_level,
            self.stopband_level,
            self.weight_ratio,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return invalid("band spec contains a non-finite value");
        }
        if !(self.passband_edge > 0.0 && self.passband_edge < self.stopband_edge && self.stopband_edge < PI) {
            return invalid(format!(
                "band edges must satisfy 0 < u_p < u_s < pi (got u_p = {}, u_s = {})",
                self.passband_edge, self.stopband_edge
            ));
        }
        if !(self.passband_level > self.stopband_level && self.stopband_level >= 0.0) {
            return invalid(format!(
                "levels must satisfy P0 > eps0 >= 0 (got P0 = {}, eps0 = {})",
                self.passband_level, self.stopband_level
            ));
        }
        if self.weight_ratio <= 0.0 {
            return invalid("weight_ratio must be positive");
        }
        Ok(())
    }

    /// `u_s - u_p` in radians.
    pub fn transition_width(&self) -> f64 {
        self.stopband_edge - self.passband_edge
    }

    /// Transition width in units of `pi`, the convention used by the length estimate.
    pub fn normalized_transition(&self) -> f64 {
        self.transition_width() / PI
    }

    /// The two approximation bands.
    pub fn bands(&self) -> [Band; 2] {
        [
            Band {
                lo: 0.0,
                hi: self.passband_edge,
                desired: self.passband_level,
                weight: 1.0,
            },
            Band {
                lo: self.stopband_edge,
                hi: PI,
                desired: self.stopband_level,
                weight: self.weight_ratio,
            },
        ]
    }
}

/// A closed angular interval in `[0, pi]` with constant desired value and weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    pub desired: f64,
    pub weight: f64,
}

/// Cosine-series coefficients `(r_0, ..., r_{M-1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CosineCoeffs(Vec<f64>);

impl CosineCoeffs {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return invalid("cosine series needs at least one coefficient");
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return invalid("cosine series coefficients must be finite");
        }
        Ok(Self(coeffs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Element count `M`.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// DC term, equal to the trace of any realizing correlation matrix.
    pub fn r0(&self) -> f64 {
        self.0[0]
    }

    pub fn eval(&self, u: f64) -> f64 {
        eval_cosine_poly(self, u)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|c| c * s).collect())
    }
}

/// `r_0 + 2 sum r_l cos(l u)`.
pub fn eval_cosine_poly(coeffs: &CosineCoeffs, u: f64) -> f64 {
    let c = coeffs.as_slice();
    let tail: f64 = c[1..]
        .iter()
        .enumerate()
        .map(|(i, r)| r * ((i + 1) as f64 * u).cos())
        .sum();
    c[0] + 2.0 * tail
}

/// Outcome of a Remez exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemezResult {
    pub coeffs: CosineCoeffs,
    /// Equiripple magnitude of the weighted error.
    pub delta: f64,
    /// The `M + 1` alternation angles, increasing.
    pub extremal_angles: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Discrete approximation problem: angles with desired values and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxGrid {
    pub angles: Vec<f64>,
    pub desired: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ApproxGrid {
    /// `points_per_band` uniformly spaced points in each band, edges included.
    pub fn per_band(bands: &[Band], points_per_band: usize) -> Result<Self> {
        check_bands(bands)?;
        let mut g = Self::empty();
        for b in bands {
            let n = if b.hi > b.lo { points_per_band.max(2) } else { 1 };
            for i in 0..n {
                let u = if n == 1 {
                    b.lo
                } else {
                    b.lo + (b.hi - b.lo) * i as f64 / (n - 1) as f64
                };
                g.push(u, b.desired, b.weight);
            }
        }
        Ok(g)
    }

    /// About `total` points over all bands, allotted in proportion to band length.
    pub fn proportional(bands: &[Band], total: usize) -> Result<Self> {
        check_bands(bands)?;
        let span: f64 = bands.iter().map(|b| b.hi - b.lo).sum();
        if span <= 0.0 {
            return invalid("approximation bands have zero total length");
        }
        let mut g = Self::empty();
        for b in bands {
            let n = ((total as f64 * (b.hi - b.lo) / span).round() as usize).max(2);
            for i in 0..n {
                g.push(b.lo + (b.hi - b.lo) * i as f64 / (n - 1) as f64, b.desired, b.weight);
            }
        }
        Ok(g)
    }

    /// Keeps the points of an arbitrary angle set that fall inside a band.
    /// Negative angles are folded onto `|u|` (the pattern is even).
    pub fn from_angles(bands: &[Band], angles: &[f64]) -> Result<Self> {
        check_bands(bands)?;
        let mut folded: Vec<f64> = angles.iter().map(|u| u.abs()).filter(|u| u.is_finite()).collect();
        folded.sort_by(f64::total_cmp);
        folded.dedup();
        let mut g = Self::empty();
        for u in folded {
            if let Some(b) = bands.iter().find(|b| u >= b.lo && u <= b.hi) {
                g.push(u, b.desired, b.weight);
            }
        }
        Ok(g)
    }

    fn empty() -> Self {
        Self {
            angles: Vec::new(),
            desired: Vec::new(),
            weights: Vec::new(),
        }
    }

    fn push(&mut self, u: f64, d: f64, w: f64) {
        self.angles.push(u);
        self.desired.push(d);
        self.weights.push(w);
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Largest `W(u) |P(u) - D(u)|` over the grid.
    pub fn max_weighted_error(&self, coeffs: &CosineCoeffs) -> f64 {
        self.angles
            .iter()
            .zip(&self.desired)
            .zip(&self.weights)
            .map(|((&u, &d), &w)| (w * (coeffs.eval(u) - d)).abs())
            .fold(0.0, f64::max)
    }
}

fn check_bands(bands: &[Band]) -> Result<()> {
    if bands.is_empty() {
        return invalid("no approximation bands");
    }
    let mut prev_hi = f64::NEG_INFINITY;
    for b in bands {
        if !(b.lo >= 0.0 && b.hi <= PI && b.lo <= b.hi) {
            return invalid(format!("band [{}, {}] outside [0, pi] or reversed", b.lo, b.hi));
        }
        if b.lo <= prev_hi {
            return invalid("bands must be increasing and disjoint");
        }
        if !(b.weight > 0.0 && b.desired.is_finite()) {
            return invalid("band weight must be positive and desired value finite");
        }
        prev_hi = b.hi;
    }
    Ok(())
}

/// Ripple predicted for `m` elements by the Kaiser-style length formula,
/// with the transition width measured in units of `pi`.
pub fn estimate_ripple(m: usize, spec: &BandSpec) -> f64 {
    let atten = 14.6 * spec.normalized_transition() * (m.max(1) - 1) as f64 + 13.0;
    10f64.powf(-atten / 20.0)
}

/// Element count the Kaiser-style formula needs for ripple `delta`, rounded to
/// the nearest integer and never below one.
pub fn estimate_elements(delta: f64, spec: &BandSpec) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("ripple must lie in (0, 1), got {delta}"));
    }
    let m = (-20.0 * delta.log10() - 13.0) / (14.6 * spec.normalized_transition()) + 1.0;
    Ok(m.round().max(1.0) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn example_spec(eps0: f64) -> BandSpec {
        BandSpec::from_normalized(0.2, 0.4, 1.0, eps0).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(BandSpec::from_normalized(0.4, 0.2, 1.0, 0.05).is_err());
        assert!(BandSpec::from_normalized(0.2, 0.2, 1.0, 0.05).is_err());
        assert!(BandSpec::from_normalized(0.0, 0.2, 1.0, 0.05).is_err());
        assert!(BandSpec::from_normalized(0.2, 1.0, 1.0, 0.05).is_err());
        assert!(BandSpec::from_normalized(0.2, 0.4, 0.05, 0.05).is_err());
        assert!(BandSpec::from_normalized(0.2, 0.4, 1.0, -0.1).is_err());
        assert!(example_spec(0.05).with_weight_ratio(0.0).is_err());
        assert!(example_spec(0.0).with_weight_ratio(2.0).is_ok());
    }

    #[test]
    fn cosine_poly_values() {
        let one = CosineCoeffs::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(one.eval(0.7), 1.0);
        let c = CosineCoeffs::new(vec![1.0, 0.5]).unwrap();
        assert_eq!(c.eval(0.0), 2.0);
        assert!(c.eval(PI).abs() < 1e-15);
        assert!(CosineCoeffs::new(vec![]).is_err());
        assert!(CosineCoeffs::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn kaiser_estimates() {
        // closed form for M = 10: 10^(-(14.6*0.2*9 + 13)/20)
        let d10 = estimate_ripple(10, &example_spec(0.05));
        assert_relative_eq!(d10, 10f64.powf(-(26.28 + 13.0) / 20.0), max_relative = 1e-12);
        assert!((d10 - 0.0112).abs() / 0.0112 < 0.05);
        let d20 = estimate_ripple(20, &example_spec(0.000339));
        assert!((d20 - 0.000339).abs() / 0.000339 < 0.15);
        assert_relative_eq!(estimate_ripple(1, &example_spec(0.05)), 10f64.powf(-13.0 / 20.0));

        assert_eq!(estimate_elements(0.0112, &example_spec(0.05)).unwrap(), 10);
        assert_eq!(estimate_elements(0.000339, &example_spec(0.000339)).unwrap(), 20);
        assert_eq!(estimate_elements(10f64.powf(-13.0 / 20.0), &example_spec(0.05)).unwrap(), 1);
        assert!(estimate_elements(0.0, &example_spec(0.05)).is_err());
        assert!(estimate_elements(1.0, &example_spec(0.05)).is_err());
    }

    #[test]
    fn grid_from_angles_folds_and_filters() {
        let spec = example_spec(0.05);
        let g = ApproxGrid::from_angles(&spec.bands(), &[-3.0, -0.1, 0.1, 0.9, 2.0]).unwrap();
        // 0.1 appears twice after folding; 0.9 lies in the transition band
        assert_eq!(g.angles, vec![0.1, 2.0, 3.0]);
        assert_eq!(g.desired, vec![1.0, 0.05, 0.05]);
    }
}
