//! Multiple-exchange Remez algorithm on a dense grid, in the `x = cos u` domain
//! with barycentric Lagrange interpolation.

use super::{ApproxGrid, Band, BandSpec, CosineCoeffs, RemezResult};
use crate::error::{invalid, Error, Result};

use std::f64::consts::PI;

pub const DEFAULT_GRID_DENSITY: usize = 16;
const MAX_ITERATIONS: usize = 250;
const RIPPLE_TOL: f64 = 1e-10;
const ROUNDING_FLOOR: f64 = 1e-13;

/// Minimax cosine series of `m` terms for a two-band spec.
///
/// The dense grid holds `grid_density * (m + 1)` points per band; both band
/// edges (and so `u = 0` and `u = pi`) are always on it.
pub fn remez_design(m: usize, spec: &BandSpec, grid_density: usize) -> Result<RemezResult> {
    spec.validate()?;
    if m < 2 {
        return invalid(format!("remez_design needs at least 2 elements, got {m}"));
    }
    remez_bands(m, &spec.bands(), grid_density)
}

/// Same as [`remez_design`] for arbitrary constant-level bands.
///
/// The exchange first converges on the dense grid, then continues with
/// extremal angles located on the continuum (golden-section search between
/// neighbouring grid points), so the reported ripple is the true maximum error.
pub fn remez_bands(m: usize, bands: &[Band], grid_density: usize) -> Result<RemezResult> {
    if grid_density < 8 {
        return invalid(format!("grid density must be at least 8, got {grid_density}"));
    }
    let grid = ApproxGrid::per_band(bands, grid_density * (m + 1))?;
    let discrete = match remez_on_grid(m, &grid) {
        Ok(r) => r,
        Err(Error::RemezNotConverged { last, .. }) => *last,
        Err(e) => return Err(e),
    };
    if discrete.delta == 0.0 {
        return Ok(discrete);
    }
    refine_continuous(m, bands, &grid, discrete)
}

fn band_index(bands: &[Band], u: f64) -> usize {
    bands
        .iter()
        .position(|b| u >= b.lo && u <= b.hi)
        .unwrap_or_else(|| {
            // nearest band for points a rounding error outside
            let dist = |b: &Band| (b.lo - u).max(u - b.hi);
            (0..bands.len()).min_by(|&a, &b| dist(&bands[a]).total_cmp(&dist(&bands[b]))).unwrap()
        })
}

/// Maximizes `f` on `[lo, hi]`; returns `(argmax, max)`.
fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if b - a <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mut best = if fc > fd { (c, fc) } else { (d, fd) };
    for u in [lo, hi] {
        let v = f(u);
        if v > best.1 {
            best = (u, v);
        }
    }
    best
}

fn refine_continuous(m: usize, bands: &[Band], grid: &ApproxGrid, start: RemezResult) -> Result<RemezResult> {
    let n_ref = m + 1;
    let k = grid.len();
    let grid_band: Vec<usize> = grid.angles.iter().map(|&u| band_index(bands, u)).collect();
    let mut ref_u = start.extremal_angles.clone();
    let mut last = start;
    let d_scale = bands.iter().fold(0.0f64, |a, b| a.max((b.desired * b.weight).abs()));
    for iter in 1..=MAX_ITERATIONS {
        let nodes: Vec<(f64, f64, f64)> = ref_u
            .iter()
            .map(|&u| {
                let b = &bands[band_index(bands, u)];
                (u.cos(), b.desired, b.weight)
            })
            .collect();
        let level = LevelledFit::from_nodes(&nodes)?;
        let err_at = |u: f64, b: &Band| b.weight * (level.interp.eval(u.cos()) - b.desired);
        let err: Vec<f64> = (0..k).map(|i| err_at(grid.angles[i], &bands[grid_band[i]])).collect();

        let mut cand_u: Vec<f64> = Vec::new();
        let mut cand_e: Vec<f64> = Vec::new();
        for i in 0..k {
            let left = i > 0 && grid_band[i - 1] == grid_band[i];
            let right = i + 1 < k && grid_band[i + 1] == grid_band[i];
            let a = err[i].abs();
            if (left && err[i - 1].abs() > a) || (right && err[i + 1].abs() > a) || err[i] == 0.0 {
                continue;
            }
            let band = &bands[grid_band[i]];
            let lo = if left { grid.angles[i - 1] } else { grid.angles[i] };
            let hi = if right { grid.angles[i + 1] } else { grid.angles[i] };
            let s = err[i].signum();
            let (mut u, mut v) = golden_max(|u| s * err_at(u, band), lo, hi);
            if s * err[i] > v {
                (u, v) = (grid.angles[i], s * err[i]);
            }
            if cand_u.last().is_some_and(|&p| u - p <= 1e-13) {
                // two grid peaks refined onto the same extremum
                if v > cand_e.last().unwrap().abs() {
                    *cand_u.last_mut().unwrap() = u;
                    *cand_e.last_mut().unwrap() = s * v;
                }
                continue;
            }
            cand_u.push(u);
            cand_e.push(s * v);
        }

        let delta = level.delta.abs();
        let max_err = cand_e.iter().fold(0.0f64, |a, e| a.max(e.abs()));
        let result = RemezResult {
            coeffs: level.interp.cosine_coeffs(m)?,
            delta,
            extremal_angles: ref_u.clone(),
            iterations: last.iterations + 1,
            converged: true,
        };
        let residual = (max_err - delta) / max_err;
        // tiny delta: the spread can sit at rounding level of P while still
        // large relative to delta
        if residual <= RIPPLE_TOL || max_err - delta <= ROUNDING_FLOOR * d_scale {
            return Ok(result);
        }
        let next: Vec<f64> = select_extrema(&cand_e, n_ref).into_iter().map(|j| cand_u[j]).collect();
        if next.len() < n_ref {
            return Err(Error::RemezNotConverged {
                residual,
                last: Box::new(RemezResult { converged: false, ..result }),
            });
        }
        let moved = next.iter().zip(&ref_u).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        last = result;
        if moved == 0.0 || iter == MAX_ITERATIONS {
            if residual <= 1e-8 {
                // stationary at rounding level
                return Ok(last);
            }
            return Err(Error::RemezNotConverged {
                residual,
                last: Box::new(RemezResult { converged: false, ..last }),
            });
        }
        ref_u = next;
    }
    unreachable!("loop returns on its final iteration")
}

/// Remez exchange restricted to the points of `grid`. On a discrete grid this
/// converges to the exact discrete minimax solution.
pub fn remez_on_grid(m: usize, grid: &ApproxGrid) -> Result<RemezResult> {
    if m == 0 {
        return invalid("need at least one coefficient");
    }
    let n_ref = m + 1;
    let k = grid.len();
    if k < n_ref {
        return invalid(format!(
            "approximation grid has {k} points, needs at least {n_ref} for {m} coefficients"
        ));
    }
    if grid.angles.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("grid angles must be strictly increasing");
    }
    let xs: Vec<f64> = grid.angles.iter().map(|u| u.cos()).collect();
    let d_scale = grid.desired.iter().fold(0.0f64, |a, d| a.max(d.abs())).max(f64::MIN_POSITIVE);

    let mut reference = initial_reference(grid, n_ref);
    if reference.len() < n_ref {
        return invalid("grid too coarse for the requested number of coefficients");
    }

    let mut err = vec![0.0; k];
    let mut last: Option<(RemezResult, f64)> = None;
    for iter in 1..=MAX_ITERATIONS {
        let level = LevelledFit::new(&reference, &xs, grid)?;
        for i in 0..k {
            err[i] = grid.weights[i] * (level.interp.eval(xs[i]) - grid.desired[i]);
        }
        let delta = level.delta.abs();
        let max_err = err.iter().fold(0.0f64, |a, e| a.max(e.abs()));

        let result = RemezResult {
            coeffs: level.interp.cosine_coeffs(m)?,
            delta,
            extremal_angles: reference.iter().map(|&i| grid.angles[i]).collect(),
            iterations: iter,
            converged: true,
        };

        // Exactly representable target: error vanishes everywhere.
        if max_err <= 1e-13 * d_scale {
            return Ok(RemezResult { delta: 0.0, ..result });
        }
        if max_err - delta <= RIPPLE_TOL * max_err {
            return Ok(result);
        }

        let next = select_extrema(&err, n_ref);
        if next == reference {
            // The reference already carries the largest errors: discrete optimum
            // up to rounding in the interpolant.
            return Ok(result);
        }
        if next.len() < n_ref {
            last = Some((result, (max_err - delta) / max_err));
            break;
        }
        reference = next;
        last = Some((result, (max_err - delta) / max_err));
    }
    let (mut result, residual) = last.expect("at least one iteration ran");
    result.converged = false;
    Err(Error::RemezNotConverged {
        residual,
        last: Box::new(result),
    })
}

/// `n_ref` grid indices spread uniformly in angle over the bands, so a narrow band
/// is not handed a share of nodes set by its grid count alone.
fn initial_reference(grid: &ApproxGrid, n_ref: usize) -> Vec<usize> {
    let k = grid.len();
    // arc length along the grid, stepping over the gaps between bands
    let mut arc = vec![0.0; k];
    for i in 1..k {
        let du = grid.angles[i] - grid.angles[i - 1];
        let same_band = grid.desired[i] == grid.desired[i - 1] && grid.weights[i] == grid.weights[i - 1];
        arc[i] = arc[i - 1] + if same_band { du } else { 0.0 };
    }
    let total = arc[k - 1];
    let mut picks: Vec<usize> = Vec::with_capacity(n_ref);
    for j in 0..n_ref {
        let target = total * j as f64 / (n_ref - 1).max(1) as f64;
        let mut i = arc.partition_point(|&a| a < target).min(k - 1);
        if let Some(&p) = picks.last() {
            i = i.max(p + 1);
        }
        // leave room for the remaining picks
        i = i.min(k - (n_ref - j));
        picks.push(i);
    }
    if total == 0.0 || picks.windows(2).any(|w| w[0] >= w[1]) {
        return (0..n_ref)
            .map(|i| ((i as f64) * (k - 1) as f64 / (n_ref - 1).max(1) as f64).round() as usize)
            .collect();
    }
    picks
}

/// Levelled-error interpolant through a reference set.
struct LevelledFit {
    delta: f64,
    interp: Barycentric,
}

impl LevelledFit {
    fn new(reference: &[usize], xs: &[f64], grid: &ApproxGrid) -> Result<Self> {
        let nodes: Vec<(f64, f64, f64)> = reference.iter().map(|&i| (xs[i], grid.desired[i], grid.weights[i])).collect();
        Self::from_nodes(&nodes)
    }

    /// Nodes are `(x, desired, weight)`.
    fn from_nodes(nodes: &[(f64, f64, f64)]) -> Result<Self> {
        let xr: Vec<f64> = nodes.iter().map(|n| n.0).collect();
        let b = barycentric_weights(&xr);
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, &(_, d, w)) in nodes.iter().enumerate() {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            num += b[j] * d;
            den += b[j] * sign / w;
        }
        if den == 0.0 || !den.is_finite() {
            return invalid("degenerate reference set in Remez exchange");
        }
        let delta = -num / den;
        let m = nodes.len() - 1;
        // The degree-(m-1) interpolant is fixed by any m of the m+1 levelled values.
        let values: Vec<f64> = nodes[..m]
            .iter()
            .enumerate()
            .map(|(j, &(_, d, w))| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                d + sign * delta / w
            })
            .collect();
        Ok(Self {
            delta,
            interp: Barycentric::new(xr[..m].to_vec(), values),
        })
    }
}

fn barycentric_weights(x: &[f64]) -> Vec<f64> {
    // Factor 2 keeps the products near unity for nodes spread over [-1, 1].
    (0..x.len())
        .map(|k| {
            let mut prod = 1.0;
            for (i, &xi) in x.iter().enumerate() {
                if i != k {
                    prod *= 2.0 * (x[k] - xi);
                }
            }
            1.0 / prod
        })
        .collect()
}

struct Barycentric {
    nodes: Vec<f64>,
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl Barycentric {
    fn new(nodes: Vec<f64>, values: Vec<f64>) -> Self {
        let weights = barycentric_weights(&nodes);
        Self {
            nodes,
            values,
            weights,
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((&xk, &fk), &wk) in self.nodes.iter().zip(&self.values).zip(&self.weights) {
            let dx = x - xk;
            if dx == 0.0 {
                return fk;
            }
            let t = wk / dx;
            num += t * fk;
            den += t;
        }
        num / den
    }

    /// Converts the interpolant, a polynomial of degree `m - 1` in `cos u`, to
    /// cosine-series coefficients by sampling at `u_j = pi j / (m - 1)` and
    /// inverting the type-I DCT.
    fn cosine_coeffs(&self, m: usize) -> Result<CosineCoeffs> {
        if m == 1 {
            return CosineCoeffs::new(vec![self.eval(1.0)]);
        }
        let l = m - 1;
        let samples: Vec<f64> = (0..=l).map(|j| self.eval((PI * j as f64 / l as f64).cos())).collect();
        let mut r = Vec::with_capacity(m);
        for k in 0..=l {
            let mut s = 0.0;
            for (j, &p) in samples.iter().enumerate() {
                let w = if j == 0 || j == l { 0.5 } else { 1.0 };
                s += w * p * (PI * (j * k) as f64 / l as f64).cos();
            }
            // c_k of P(u) = sum c_k cos(k u)
            let ck = if k == 0 || k == l { s / l as f64 } else { 2.0 * s / l as f64 };
            r.push(if k == 0 { ck } else { 0.5 * ck });
        }
        CosineCoeffs::new(r)
    }
}

/// One extremum per maximal same-sign run of the error, then trimmed to
/// `n_ref` points keeping the largest errors while preserving alternation.
fn select_extrema(err: &[f64], n_ref: usize) -> Vec<usize> {
    let mut picks: Vec<usize> = Vec::new();
    let mut run_sign = 0.0f64;
    for (i, &e) in err.iter().enumerate() {
        let s = if e > 0.0 {
            1.0
        } else if e < 0.0 {
            -1.0
        } else {
            run_sign
        };
        if picks.is_empty() || (s != run_sign && s != 0.0 && run_sign != 0.0) {
            picks.push(i);
            run_sign = s;
        } else {
            if run_sign == 0.0 {
                run_sign = s;
            }
            let last = picks.last_mut().unwrap();
            if e.abs() > err[*last].abs() {
                *last = i;
            }
        }
    }

    while picks.len() > n_ref {
        let excess = picks.len() - n_ref;
        let (kmin, _) = picks
            .iter()
            .enumerate()
            .min_by(|a, b| err[*a.1].abs().total_cmp(&err[*b.1].abs()))
            .unwrap();
        let last = picks.len() - 1;
        if excess == 1 || kmin == 0 || kmin == last {
            if err[picks[0]].abs() <= err[picks[last]].abs() {
                picks.remove(0);
            } else {
                picks.pop();
            }
        } else {
            // Dropping an interior point leaves two same-sign neighbours; keep the larger.
            let (a, b) = (picks[kmin - 1], picks[kmin + 1]);
            let drop = if err[a].abs() < err[b].abs() { kmin - 1 } else { kmin + 1 };
            let mut idx = [kmin, drop];
            idx.sort_unstable();
            picks.remove(idx[1]);
            picks.remove(idx[0]);
        }
    }
    picks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cheb_design::eval_cosine_poly;
    use approx::assert_relative_eq;

    #[test]
    fn constant_target_is_exact() {
        let band = [Band {
            lo: 0.0,
            hi: PI,
            desired: 0.7,
            weight: 1.0,
        }];
        let res = remez_bands(4, &band, 16).unwrap();
        assert_eq!(res.delta, 0.0);
        assert_relative_eq!(res.coeffs.as_slice()[0], 0.7, epsilon = 1e-14);
        for c in &res.coeffs.as_slice()[1..] {
            assert!(c.abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let spec = BandSpec::from_normalized(0.2, 0.4, 1.0, 0.05).unwrap();
        assert!(remez_design(1, &spec, 16).is_err());
        assert!(remez_design(10, &spec, 4).is_err());
        let g = ApproxGrid::per_band(&spec.bands(), 2).unwrap();
        assert!(matches!(remez_on_grid(10, &g), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn alternation_holds_for_example_designs() {
        for (m, eps0) in [(10, 0.05), (20, 0.000339), (7, 0.0)] {
            let spec = BandSpec::from_normalized(0.2, 0.4, 1.0, eps0).unwrap();
            let res = remez_design(m, &spec, DEFAULT_GRID_DENSITY).unwrap();
            assert!(res.converged);
            assert_eq!(res.extremal_angles.len(), m + 1);
            assert!(res.extremal_angles.windows(2).all(|w| w[0] < w[1]));
            let mut prev_sign = 0.0;
            for &u in &res.extremal_angles {
                let in_pass = u <= spec.passband_edge;
                assert!(in_pass || u >= spec.stopband_edge);
                let d = if in_pass { 1.0 } else { eps0 };
                let e = eval_cosine_poly(&res.coeffs, u) - d;
                assert_relative_eq!(e.abs(), res.delta, max_relative = 1e-8);
                assert!(e.signum() != prev_sign);
                prev_sign = e.signum();
            }
        }
    }

    #[test]
    fn weighted_stopband_scales_ripple() {
        let spec = BandSpec::from_normalized(0.2, 0.4, 1.0, 0.0).unwrap().with_weight_ratio(4.0).unwrap();
        let res = remez_design(12, &spec, 16).unwrap();
        let grid = ApproxGrid::per_band(&spec.bands(), 16 * 13).unwrap();
        let (mut pass, mut stop) = (0.0f64, 0.0f64);
        for (&u, &d) in grid.angles.iter().zip(&grid.desired) {
            let e = (res.coeffs.eval(u) - d).abs();
            if u <= spec.passband_edge {
                pass = pass.max(e);
            } else {
                stop = stop.max(e);
            }
        }
        assert_relative_eq!(pass, res.delta, max_relative = 1e-8);
        assert_relative_eq!(stop, res.delta / 4.0, max_relative = 1e-8);
    }

    #[test]
    fn extrema_selection_alternates() {
        let err = [0.1, 0.3, -0.2, -0.5, 0.4, 0.05, -0.01, 0.2];
        let picks = select_extrema(&err, 4);
        assert_eq!(picks.len(), 4);
        for w in picks.windows(2) {
            assert!(err[w[0]].signum() != err[w[1]].signum());
        }
        assert_eq!(picks, vec![1, 3, 4, 6]);

        // two surplus points with the smallest one interior: it goes with a neighbour
        let err = [0.5, -0.5, 0.01, -0.4, 0.5, -0.5];
        assert_eq!(select_extrema(&err, 4), vec![0, 1, 4, 5]);
    }
}
