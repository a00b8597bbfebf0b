//! Discrete minimax fit by linear programming, used to check the Remez engine.
//!
//! The primal problem is `min t` subject to `|W_k (P(u_k) - D_k)| <= t` on every
//! grid point. Its dual has only `M + 1` equality rows (one per cosine term plus
//! the normalization `sum lambda = 1`), so a dense two-phase tableau simplex on
//! the dual is small even for thousands of grid points. The optimal basis names
//! the active primal constraints, and solving those as equalities gives the
//! coefficients.

use super::{ApproxGrid, BandSpec, CosineCoeffs};
use crate::error::{invalid, Error, Result};
use crate::linalg::solve_real;

const PIVOT_TOL: f64 = 1e-12;
const COST_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 50_000;

/// Minimax coefficients for `spec` over the in-band points of `grid`.
pub fn lp_minimax_oracle(m: usize, spec: &BandSpec, grid: &[f64]) -> Result<CosineCoeffs> {
    spec.validate()?;
    let g = ApproxGrid::from_angles(&spec.bands(), grid)?;
    lp_minimax_on_grid(m, &g)
}

pub fn lp_minimax_on_grid(m: usize, grid: &ApproxGrid) -> Result<CosineCoeffs> {
    if m == 0 {
        return invalid("need at least one coefficient");
    }
    if grid.len() < 4 * m {
        return invalid(format!(
            "LP oracle needs at least {} in-band grid points, got {}",
            4 * m,
            grid.len()
        ));
    }
    let k = grid.len();
    let rows = m + 1;
    let cols = 2 * k;

    // Column 2i + s encodes the constraint sign * W_i (P(u_i) - D_i) <= t.
    let mut a = vec![0.0; rows * cols];
    let mut cost = vec![0.0; cols];
    for i in 0..k {
        for (s, sign) in [(0usize, 1.0f64), (1, -1.0)] {
            let col = 2 * i + s;
            let w = sign * grid.weights[i];
            for j in 0..m {
                a[j * cols + col] = w * (j as f64 * grid.angles[i]).cos();
            }
            a[m * cols + col] = 1.0;
            // dual objective: maximize -sum lambda * sign * W * D  ->  minimize its negative
            cost[col] = w * grid.desired[i];
        }
    }
    let mut b = vec![0.0; rows];
    b[m] = 1.0;

    let basis = simplex_min(rows, cols, a, b, &cost)?;

    let n = m + 1;
    let mut sys = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for (r, &col) in basis.iter().enumerate() {
        let i = col / 2;
        let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
        let w = sign * grid.weights[i];
        for j in 0..m {
            sys[r * n + j] = w * (j as f64 * grid.angles[i]).cos();
        }
        sys[r * n + m] = -1.0;
        rhs[r] = w * grid.desired[i];
    }
    let sol = solve_real(sys, rhs).map_err(|_| Error::InvalidInput("LP oracle: degenerate active set".into()))?;
    let coeffs = sol[..m]
        .iter()
        .enumerate()
        .map(|(j, &c)| if j == 0 { c } else { 0.5 * c })
        .collect();
    CosineCoeffs::new(coeffs)
}

/// Two-phase tableau simplex for `min cost^T x, A x = b, x >= 0` with `b >= 0`.
/// Returns the optimal basis (one structural column per row).
fn simplex_min(rows: usize, cols: usize, a: Vec<f64>, b: Vec<f64>, cost: &[f64]) -> Result<Vec<usize>> {
    let width = cols + rows + 1;
    let rhs = width - 1;
    let mut t = vec![0.0; rows * width];
    for r in 0..rows {
        t[r * width..r * width + cols].copy_from_slice(&a[r * cols..(r + 1) * cols]);
        t[r * width + cols + r] = 1.0;
        t[r * width + rhs] = b[r];
    }
    let mut basis: Vec<usize> = (cols..cols + rows).collect();

    // Phase I: minimize the sum of artificials.
    let mut z = vec![0.0; width];
    for r in 0..rows {
        for j in 0..cols {
            z[j] -= t[r * width + j];
        }
        z[rhs] -= t[r * width + rhs];
    }
    run_simplex(&mut t, &mut z, &mut basis, rows, width, cols + rows)?;
    if -z[rhs] > 1e-9 {
        return invalid("LP oracle: dual problem infeasible");
    }

    // Pivot any zero-level artificial out of the basis.
    for r in 0..rows {
        if basis[r] >= cols {
            let pivot_col = (0..cols).find(|&j| t[r * width + j].abs() > 1e-9);
            match pivot_col {
                Some(j) => pivot(&mut t, &mut z, &mut basis, rows, width, r, j),
                None => return invalid("LP oracle: redundant constraint row"),
            }
        }
    }

    // Phase II with the real costs; artificials may no longer enter.
    let mut z = vec![0.0; width];
    z[..cols].copy_from_slice(cost);
    for r in 0..rows {
        let cb = cost[basis[r]];
        if cb != 0.0 {
            for j in 0..width {
                z[j] -= cb * t[r * width + j];
            }
        }
    }
    run_simplex(&mut t, &mut z, &mut basis, rows, width, cols)?;
    Ok(basis)
}

fn run_simplex(
    t: &mut [f64],
    z: &mut [f64],
    basis: &mut [usize],
    rows: usize,
    width: usize,
    enterable: usize,
) -> Result<()> {
    let rhs = width - 1;
    let mut degenerate_run = 0usize;
    for _ in 0..MAX_PIVOTS {
        // Dantzig's rule, falling back to Bland's rule while pivots stall.
        let entering = if degenerate_run < 50 {
            (0..enterable)
                .filter(|&j| z[j] < -COST_TOL)
                .min_by(|&i, &j| z[i].total_cmp(&z[j]))
        } else {
            (0..enterable).find(|&j| z[j] < -COST_TOL)
        };
        let Some(j) = entering else {
            return Ok(());
        };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..rows {
            let arj = t[r * width + j];
            if arj > PIVOT_TOL {
                let ratio = t[r * width + rhs] / arj;
                let better = match leave {
                    None => true,
                    Some((lr, best)) => ratio < best - 1e-15 || (ratio <= best + 1e-15 && basis[r] < basis[lr]),
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let Some((r, ratio)) = leave else {
            return invalid("LP oracle: unbounded dual (grid too coarse)");
        };
        degenerate_run = if ratio <= 1e-15 { degenerate_run + 1 } else { 0 };
        pivot(t, z, basis, rows, width, r, j);
    }
    Err(Error::NonConvergence {
        method: "lp simplex",
        iterations: MAX_PIVOTS,
        residual: f64::NAN,
        detail: "pivot limit reached".into(),
    })
}

fn pivot(t: &mut [f64], z: &mut [f64], basis: &mut [usize], rows: usize, width: usize, r: usize, j: usize) {
    let p = t[r * width + j];
    for x in &mut t[r * width..(r + 1) * width] {
        *x /= p;
    }
    let pivot_row: Vec<f64> = t[r * width..(r + 1) * width].to_vec();
    for rr in 0..rows {
        if rr == r {
            continue;
        }
        let f = t[rr * width + j];
        if f != 0.0 {
            for (x, &pv) in t[rr * width..(rr + 1) * width].iter_mut().zip(&pivot_row) {
                *x -= f * pv;
            }
        }
    }
    let f = z[j];
    if f != 0.0 {
        for (x, &pv) in z.iter_mut().zip(&pivot_row) {
            *x -= f * pv;
        }
    }
    basis[r] = j;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cheb_design::Band;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn constant_response_two_terms() {
        let band = [Band {
            lo: 0.0,
            hi: PI,
            desired: 0.3,
            weight: 1.0,
        }];
        let g = ApproxGrid::per_band(&band, 64).unwrap();
        let c = lp_minimax_on_grid(2, &g).unwrap();
        assert_relative_eq!(c.as_slice()[0], 0.3, epsilon = 1e-12);
        assert!(c.as_slice()[1].abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        let spec = BandSpec::from_normalized(0.2, 0.4, 1.0, 0.05).unwrap();
        let grid: Vec<f64> = (0..20).map(|i| i as f64 * 0.15).collect();
        assert!(lp_minimax_oracle(10, &spec, &grid).is_err());
    }
}
