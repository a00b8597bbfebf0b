//! Dense complex matrices and a cyclic Jacobi eigensolver for Hermitian input.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_real_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self::from_fn(rows, cols, |i, j| Complex64::new(f(i, j), 0.0))
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return invalid(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn matmul(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if self.cols != rhs.rows {
            return invalid(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            ));
        }
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let src = rhs.row(k);
                for (o, b) in out.row_mut(i).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * self^H`.
    pub fn gram(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.rows, self.rows);
        for i in 0..self.rows {
            for j in i..self.rows {
                let s: Complex64 = self
                    .row(i)
                    .iter()
                    .zip(self.row(j))
                    .map(|(a, b)| a * b.conj())
                    .sum();
                out[(i, j)] = s;
                out[(j, i)] = s.conj();
            }
        }
        out
    }

    pub fn sub(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.data.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    /// Largest `|A_ij - conj(A_ji)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Ensures the matrix is square and Hermitian within `rel_tol * max(1, ||A||_F)`.
    pub fn check_hermitian(&self, rel_tol: f64) -> Result<()> {
        if !self.is_square() {
            return invalid(format!("matrix is {}x{}, expected square", self.rows, self.cols));
        }
        let defect = self.hermitian_defect();
        let scale = self.frobenius_norm().max(f64::MIN_POSITIVE);
        if defect > rel_tol * scale {
            return invalid(format!(
                "matrix is not Hermitian: defect {defect:.3e} (relative {:.3e})",
                defect / scale
            ));
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigen-decomposition `A = V diag(values) V^H` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Eigenvalues, sorted descending.
    pub values: Vec<f64>,
    /// Unitary matrix whose `k`-th column pairs with `values[k]`.
    pub vectors: CMatrix,
    pub sweeps: usize,
}

const JACOBI_MAX_SWEEPS: usize = 64;
const JACOBI_REL_TOL: f64 = 1e-14;

/// Cyclic Jacobi eigensolver for Hermitian matrices.
///
/// Each rotation first removes the phase of the pivot `a_pq` with a diagonal
/// unitary, then applies the real symmetric Jacobi rotation that annihilates
/// it. Sweeps stop once the off-diagonal Frobenius norm drops below
/// `1e-14 * ||A||_F`.
pub fn hermitian_eigen(a: &CMatrix) -> Result<HermitianEigen> {
    if !a.is_square() {
        return invalid("eigen-decomposition needs a square matrix");
    }
    let n = a.rows();
    let mut w = a.clone();
    // Symmetrize so that rounding in the input does not bias the rotations.
    for i in 0..n {
        w[(i, i)] = Complex64::new(w[(i, i)].re, 0.0);
        for j in i + 1..n {
            let avg = 0.5 * (w[(i, j)] + w[(j, i)].conj());
            w[(i, j)] = avg;
            w[(j, i)] = avg.conj();
        }
    }
    let mut v = CMatrix::identity(n);
    let threshold = JACOBI_REL_TOL * a.frobenius_norm();

    let off_norm = |m: &CMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[(i, j)].norm_sqr();
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off_norm(&w) > threshold {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NonConvergence {
                method: "jacobi",
                iterations: sweeps,
                residual: off_norm(&w),
                detail: "off-diagonal norm above threshold".into(),
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = w[(p, q)];
                let mag = apq.norm();
                if mag <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = w[(p, p)].re;
                let aqq = w[(q, q)].re;
                // Negligible pivot relative to both diagonals: zero it outright.
                if mag < 1e-300 || (app.abs() + mag == app.abs() && aqq.abs() + mag == aqq.abs()) {
                    w[(p, q)] = Complex64::new(0.0, 0.0);
                    w[(q, p)] = Complex64::new(0.0, 0.0);
                    continue;
                }
                let phase = apq / mag; // e^{i theta}
                let theta = (aqq - app) / (2.0 * mag);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // U restricted to (p, q) = diag(1, e^{-i theta}) * [[c, s], [-s, c]]
                let upp = Complex64::new(c, 0.0);
                let upq = Complex64::new(s, 0.0);
                let uqp = -phase.conj() * s;
                let uqq = phase.conj() * c;

                for k in 0..n {
                    let akp = w[(k, p)];
                    let akq = w[(k, q)];
                    w[(k, p)] = akp * upp + akq * uqp;
                    w[(k, q)] = akp * upq + akq * uqq;
                }
                for k in 0..n {
                    let apk = w[(p, k)];
                    let aqk = w[(q, k)];
                    w[(p, k)] = upp.conj() * apk + uqp.conj() * aqk;
                    w[(q, k)] = upq.conj() * apk + uqq.conj() * aqk;
                }
                w[(p, q)] = Complex64::new(0.0, 0.0);
                w[(q, p)] = Complex64::new(0.0, 0.0);
                w[(p, p)] = Complex64::new(app - t * mag, 0.0);
                w[(q, q)] = Complex64::new(aqq + t * mag, 0.0);

                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * upp + vkq * uqp;
                    v[(k, q)] = vkp * upq + vkq * uqq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[(j, j)].re.total_cmp(&w[(i, i)].re));
    let values = order.iter().map(|&i| w[(i, i)].re).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(HermitianEigen {
        values,
        vectors,
        sweeps,
    })
}

impl HermitianEigen {
    /// `V f(diag) V^H` for a per-eigenvalue map `f`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let scaled: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = CMatrix::zeros(n, n);
        for k in 0..n {
            let lk = scaled[k];
            if lk == 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = self.vectors[(i, k)] * lk;
                for j in i..n {
                    out[(i, j)] += vik * self.vectors[(j, k)].conj();
                }
            }
        }
        for i in 0..n {
            out[(i, i)].im = 0.0;
            for j in i + 1..n {
                out[(j, i)] = out[(i, j)].conj();
            }
        }
        out
    }

    pub fn min_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

/// Solves the dense real system `a x = b` by Gaussian elimination with partial
/// pivoting. `a` is row-major `n x n`.
pub fn solve_real(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n * n {
        return invalid("solve_real: dimension mismatch");
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap();
        if a[pivot * n + col].abs() < 1e-300 {
            return invalid("solve_real: singular system");
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[r * n + k] -= f * a[col * n + k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r * n + k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r * n + r];
    }
    Ok(x)
}
