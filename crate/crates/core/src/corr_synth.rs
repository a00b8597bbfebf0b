//! Correlation matrices that realize a cosine series.
//!
//! Any Hermitian `R` whose `l`-th superdiagonal sums to `r_l` produces the
//! beampattern `r_0 + 2 sum r_l cos(l u)`. This module builds such matrices
//! (Toeplitz, or a PSD fit when the Toeplitz candidate is indefinite) and
//! factors them into transmit-beamspace weights.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cheb_design::CosineCoeffs;
use crate::error::{invalid, Error, Result};
use crate::linalg::{hermitian_eigen, CMatrix};
use crate::mtsfm::WaveformSet;
use crate::optim::{Bfgs, BfgsOptions, StepOutcome};

const HERMITIAN_TOL: f64 = 1e-12;
const DIAG_SUM_IMAG_TOL: f64 = 1e-10;
const TBP_CLAMP: f64 = 1e-10;

/// Hermitian waveform correlation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    matrix: CMatrix,
    trace_energy: f64,
}

impl CorrelationMatrix {
    /// Validates that `matrix` is square and Hermitian with a real,
    /// nonnegative diagonal.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        matrix.check_hermitian(HERMITIAN_TOL)?;
        let scale = matrix.frobenius_norm().max(f64::MIN_POSITIVE);
        for i in 0..matrix.rows() {
            let d = matrix[(i, i)];
            if d.im.abs() > HERMITIAN_TOL * scale || d.re < -HERMITIAN_TOL * scale {
                return invalid(format!("diagonal entry {i} is {d}, expected real and >= 0"));
            }
        }
        let trace_energy = matrix.trace().re;
        Ok(Self { matrix, trace_energy })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// Element count `M`.
    pub fn size(&self) -> usize {
        self.matrix.rows()
    }

    /// `tr R`, the total transmitted energy.
    pub fn trace_energy(&self) -> f64 {
        self.trace_energy
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.size()).map(|i| self.matrix[(i, i)].re).collect()
    }
}

/// `r_l = sum_m R[m, m + l]` (real part). Fails when the imaginary residue
/// exceeds `1e-10 |r_0|`, i.e. when the pattern is not even.
pub fn diagonal_sums(r: &CorrelationMatrix) -> Result<CosineCoeffs> {
    let (re, im) = raw_diagonal_sums(r.matrix());
    let worst = im.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = DIAG_SUM_IMAG_TOL * re[0].abs().max(f64::MIN_POSITIVE);
    if worst > tol {
        return Err(Error::ImaginaryResidue {
            residue: worst,
            tolerance: tol,
        });
    }
    CosineCoeffs::new(re)
}

fn raw_diagonal_sums(m: &CMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows();
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for l in 0..n {
        for i in 0..n - l {
            let z = m[(i, i + l)];
            re[l] += z.re;
            im[l] += z.im;
        }
    }
    (re, im)
}

/// Symmetric Toeplitz matrix with `R[m, m'] = r_|m-m'| / (M - |m-m'|)`.
///
/// Equal diagonal entries `r_0 / M`. Not necessarily PSD.
pub fn toeplitz_from_coeffs(coeffs: &CosineCoeffs) -> Result<CorrelationMatrix> {
    let c = coeffs.as_slice();
    let m = c.len();
    let mat = CMatrix::from_real_fn(m, m, |i, j| {
        let l = i.abs_diff(j);
        c[l] / (m - l) as f64
    });
    CorrelationMatrix::new(mat)
}

/// Result of a semidefiniteness test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdCheck {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
}

/// PSD iff `lambda_min >= -tol * max(1, ||R||_F)`.
pub fn is_psd(r: &CorrelationMatrix, tol: f64) -> Result<PsdCheck> {
    let eig = hermitian_eigen(r.matrix())?;
    let min_eigenvalue = eig.min_value();
    let bound = -tol * r.matrix().frobenius_norm().max(1.0);
    Ok(PsdCheck {
        is_psd: min_eigenvalue >= bound,
        min_eigenvalue,
    })
}

/// Solver used by [`psd_fit_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PsdFitMethod {
    /// Quasi-Newton on the Lagrangian dual of the Frobenius projection of the
    /// Toeplitz candidate onto {PSD} intersected with the coefficient constraints.
    #[default]
    DualQuasiNewton,
    /// Dykstra's alternating projections between the same two sets.
    Dykstra,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdFitOptions {
    /// Also pin every diagonal entry to `r_0 / M`.
    pub equal_power: bool,
    pub max_iter: usize,
    /// Coefficient residual tolerance, relative to `|r_0|`.
    pub tol: f64,
    pub method: PsdFitMethod,
}

impl Default for PsdFitOptions {
    fn default() -> Self {
        Self {
            equal_power: false,
            max_iter: 5000,
            tol: 1e-8,
            method: PsdFitMethod::DualQuasiNewton,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsdFit {
    pub matrix: CorrelationMatrix,
    pub iterations: usize,
    /// `max_l |diag_sum_l - r_l| / |r_0|`.
    pub residual: f64,
    pub min_eigenvalue: f64,
    /// `(max diag - min diag) / (r_0 / M)`.
    pub power_spread: f64,
}

/// PSD matrix reproducing `coeffs`, starting from the Toeplitz candidate.
pub fn psd_fit(coeffs: &CosineCoeffs, equal_power: bool, max_iter: usize, tol: f64) -> Result<CorrelationMatrix> {
    let opts = PsdFitOptions {
        equal_power,
        max_iter,
        tol,
        ..Default::default()
    };
    psd_fit_with(coeffs, &opts).map(|f| f.matrix)
}

pub fn psd_fit_with(coeffs: &CosineCoeffs, opts: &PsdFitOptions) -> Result<PsdFit> {
    if !(opts.tol > 0.0) {
        return invalid("psd_fit tolerance must be positive");
    }
    if coeffs.r0() <= 0.0 {
        return invalid("psd_fit needs r_0 > 0");
    }
    let constraints = Constraints::new(coeffs, opts.equal_power);
    let start = toeplitz_from_coeffs(coeffs)?.into_matrix();
    match opts.method {
        PsdFitMethod::DualQuasiNewton => fit_dual(&constraints, start, opts),
        PsdFitMethod::Dykstra => fit_dykstra(&constraints, start, opts),
    }
}

/// Linear constraints on a Hermitian matrix: the real part of every
/// superdiagonal sum, plus either the trace or each diagonal entry.
struct Constraints {
    m: usize,
    target: Vec<f64>,
    equal_power: bool,
    r0: f64,
}

impl Constraints {
    fn new(coeffs: &CosineCoeffs, equal_power: bool) -> Self {
        let c = coeffs.as_slice();
        let m = c.len();
        // layout: [diagonal part..., r_1..r_{M-1}]
        let mut target = Vec::new();
        if equal_power {
            target.extend(std::iter::repeat_n(c[0] / m as f64, m));
        } else {
            target.push(c[0]);
        }
        target.extend_from_slice(&c[1..]);
        Self {
            m,
            target,
            equal_power,
            r0: c[0],
        }
    }

    fn n_diag(&self) -> usize {
        if self.equal_power {
            self.m
        } else {
            1
        }
    }

    fn apply(&self, x: &CMatrix) -> Vec<f64> {
        let m = self.m;
        let mut out = Vec::with_capacity(self.target.len());
        if self.equal_power {
            out.extend((0..m).map(|i| x[(i, i)].re));
        } else {
            out.push((0..m).map(|i| x[(i, i)].re).sum());
        }
        for l in 1..m {
            out.push((0..m - l).map(|i| x[(i, i + l)].re).sum());
        }
        out
    }

    /// Adjoint map with respect to the real Frobenius inner product on Hermitian matrices.
    fn adjoint(&self, y: &[f64]) -> CMatrix {
        let m = self.m;
        let nd = self.n_diag();
        let mut z = CMatrix::zeros(m, m);
        for i in 0..m {
            z[(i, i)].re = if self.equal_power { y[i] } else { y[0] };
        }
        for l in 1..m {
            let v = 0.5 * y[nd + l - 1];
            for i in 0..m - l {
                z[(i, i + l)].re += v;
                z[(i + l, i)].re += v;
            }
        }
        z
    }

    /// Orthogonal projection onto the affine constraint set.
    fn project(&self, x: &CMatrix) -> CMatrix {
        let m = self.m;
        let mut out = x.clone();
        let cur = self.apply(x);
        if self.equal_power {
            for i in 0..m {
                out[(i, i)].re = self.target[i];
            }
        } else {
            let shift = (self.target[0] - cur[0]) / m as f64;
            for i in 0..m {
                out[(i, i)].re += shift;
            }
        }
        let nd = self.n_diag();
        for l in 1..m {
            let shift = (self.target[nd + l - 1] - cur[nd + l - 1]) / (m - l) as f64;
            for i in 0..m - l {
                out[(i, i + l)].re += shift;
                out[(i + l, i)].re += shift;
            }
        }
        out
    }

    /// Relative residual against the cosine coefficients and the equal-power
    /// targets (if any).
    fn residual(&self, x: &CMatrix) -> f64 {
        let cur = self.apply(x);
        let worst = cur
            .iter()
            .zip(&self.target)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        worst / self.r0.abs()
    }
}

fn project_psd(x: &CMatrix) -> Result<(CMatrix, f64)> {
    let eig = hermitian_eigen(x)?;
    Ok((eig.reconstruct_with(|l| l.max(0.0)), eig.min_value()))
}

fn finish(constraints: &Constraints, x: CMatrix, iterations: usize, residual: f64, tol: f64) -> Result<PsdFit> {
    let eig = hermitian_eigen(&x)?;
    let min_eigenvalue = eig.min_value();
    let diag: Vec<f64> = (0..constraints.m).map(|i| x[(i, i)].re).collect();
    let spread = (diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - diag.iter().cloned().fold(f64::INFINITY, f64::min))
        / (constraints.r0 / constraints.m as f64);
    let matrix = CorrelationMatrix::new(x)?;
    if residual > tol || min_eigenvalue < -tol * constraints.r0.abs() {
        return Err(Error::PsdFitNotConverged {
            iterations,
            residual,
            power_spread: spread,
            last: Box::new(matrix),
        });
    }
    Ok(PsdFit {
        matrix,
        iterations,
        residual,
        min_eigenvalue,
        power_spread: spread,
    })
}

fn fit_dual(constraints: &Constraints, start: CMatrix, opts: &PsdFitOptions) -> Result<PsdFit> {
    // theta(y) = 1/2 ||P+(T + A*y)||^2 - <y, b>, gradient A(P+(T + A*y)) - b.
    let mut failure: Option<Error> = None;
    let mut objective = |y: &[f64], grad: &mut [f64]| -> f64 {
        let shifted = start_plus(&start, &constraints.adjoint(y));
        match project_psd(&shifted) {
            Ok((x, _)) => {
                let ax = constraints.apply(&x);
                for (g, (a, b)) in grad.iter_mut().zip(ax.iter().zip(&constraints.target)) {
                    *g = a - b;
                }
                let norm2 = x.frobenius_norm().powi(2);
                let yb: f64 = y.iter().zip(&constraints.target).map(|(a, b)| a * b).sum();
                0.5 * norm2 - yb
            }
            Err(e) => {
                failure = Some(e);
                f64::NAN
            }
        }
    };

    let n = constraints.target.len();
    let scale = constraints.r0.abs() / constraints.m as f64;
    let bfgs_opts = BfgsOptions {
        initial_step: scale,
        ..Default::default()
    };
    let mut opt = Bfgs::new(vec![0.0; n], &mut objective, bfgs_opts);
    let mut iterations = 0;
    let residual_of = |opt: &Bfgs| opt.grad_inf_norm() / constraints.r0.abs();
    // A feasible X is PSD with trace r_0, so ||X|| <= r_0 and the dual optimum is
    // at least 1/2 ||T||^2 - 1/2 (r_0 + ||T||)^2; going below proves infeasibility.
    let t_norm = start.frobenius_norm();
    let dual_floor = 0.5 * t_norm * t_norm - 0.5 * (constraints.r0.abs() + t_norm).powi(2);
    let mut infeasible = false;
    while residual_of(&opt) > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        if opt.step(&mut objective, &|_| true) == StepOutcome::Stalled {
            break;
        }
        if opt.value() < dual_floor {
            infeasible = true;
            break;
        }
    }
    if let Some(e) = failure {
        return Err(e);
    }
    let y = opt.x().to_vec();
    let (x, _) = project_psd(&start_plus(&start, &constraints.adjoint(&y)))?;
    let residual = if infeasible { constraints.residual(&x).max(opts.tol * 2.0) } else { constraints.residual(&x) };
    finish(constraints, x, iterations, residual, opts.tol)
}

fn start_plus(a: &CMatrix, b: &CMatrix) -> CMatrix {
    CMatrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] + b[(i, j)])
}

fn fit_dykstra(constraints: &Constraints, start: CMatrix, opts: &PsdFitOptions) -> Result<PsdFit> {
    let m = constraints.m;
    let mut x_aff = constraints.project(&start);
    let mut correction = CMatrix::zeros(m, m);
    let mut x_psd = x_aff.clone();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let y = start_plus(&x_aff, &correction);
        let (p, _) = project_psd(&y)?;
        correction = y.sub(&p);
        x_psd = p;
        residual = constraints.residual(&x_psd);
        if residual <= opts.tol {
            break;
        }
        // The affine set needs no Dykstra correction.
        x_aff = constraints.project(&x_psd);
    }
    finish(constraints, x_psd, iterations, residual, opts.tol)
}

/// Transmit-beamspace weights `W = U sqrt(Lambda)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TbpWeights {
    entries: CMatrix,
    rank: usize,
}

impl TbpWeights {
    pub fn new(entries: CMatrix) -> Result<Self> {
        if !entries.is_square() {
            return invalid("TBP weight matrix must be square");
        }
        let rank = (0..entries.cols())
            .filter(|&c| (0..entries.rows()).any(|r| entries[(r, c)] != Complex64::new(0.0, 0.0)))
            .count();
        Ok(Self { entries, rank })
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    /// Number of retained eigen-directions.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `W W^H`.
    pub fn correlation(&self) -> CMatrix {
        self.entries.gram()
    }
}

/// Factors a PSD matrix as `W W^H`, columns ordered by descending eigenvalue.
///
/// Eigenvalues in `[-1e-10 ||R||_F, 0)` are treated as zero; anything more
/// negative is rejected.
pub fn tbp_weights(r: &CorrelationMatrix) -> Result<TbpWeights> {
    let eig = hermitian_eigen(r.matrix())?;
    let norm = r.matrix().frobenius_norm();
    let lmin = eig.min_value();
    if lmin < -TBP_CLAMP * norm {
        return invalid(format!(
            "matrix is indefinite (min eigenvalue {lmin:.3e}, norm {norm:.3e}); fit a PSD matrix first"
        ));
    }
    let m = r.size();
    let floor = 1e-14 * norm;
    let roots: Vec<f64> = eig
        .values
        .iter()
        .map(|&l| if l > floor { l.sqrt() } else { 0.0 })
        .collect();
    let w = CMatrix::from_fn(m, m, |i, k| eig.vectors[(i, k)] * roots[k]);
    TbpWeights::new(w)
}

/// `X~ = W X`.
pub fn apply_tbp(w: &TbpWeights, x: &WaveformSet) -> Result<WaveformSet> {
    if w.entries().cols() != x.count() {
        return invalid(format!(
            "weights are {}x{} but the set has {} waveforms",
            w.entries().rows(),
            w.entries().cols(),
            x.count()
        ));
    }
    let mixed = w.entries().matmul(x.samples())?;
    WaveformSet::from_samples(mixed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn coeffs(v: &[f64]) -> CosineCoeffs {
        CosineCoeffs::new(v.to_vec()).unwrap()
    }

    fn real(m: usize, f: impl Fn(usize, usize) -> f64) -> CorrelationMatrix {
        CorrelationMatrix::new(CMatrix::from_real_fn(m, m, f)).unwrap()
    }

    #[test]
    fn diagonal_sum_examples() {
        let r = real(3, |i, j| if i == j { 1.0 / 3.0 } else { 0.0 });
        let c = diagonal_sums(&r).unwrap();
        assert_relative_eq!(c.as_slice()[0], 1.0, epsilon = 1e-15);
        assert_eq!(&c.as_slice()[1..], &[0.0, 0.0]);

        let r = real(2, |i, j| if i == j { 0.5 } else { 0.3 });
        assert_eq!(diagonal_sums(&r).unwrap().as_slice(), &[1.0, 0.3]);
    }

    #[test]
    fn diagonal_sums_reject_complex_superdiagonal() {
        let mut m = CMatrix::identity(2);
        m[(0, 1)] = Complex64::new(0.0, 0.4);
        m[(1, 0)] = Complex64::new(0.0, -0.4);
        let r = CorrelationMatrix::new(m).unwrap();
        assert!(matches!(diagonal_sums(&r), Err(Error::ImaginaryResidue { .. })));
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_real_fn(2, 2, |i, j| if i < j { 1.0 } else { 0.5 });
        assert!(CorrelationMatrix::new(m).is_err());
        let m = CMatrix::from_real_fn(2, 2, |i, j| if i == j { -1.0 } else { 0.0 });
        assert!(CorrelationMatrix::new(m).is_err());
    }

    #[test]
    fn toeplitz_of_unit_impulse() {
        let mut v = vec![0.0; 10];
        v[0] = 1.0;
        let t = toeplitz_from_coeffs(&coeffs(&v)).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let want = if i == j { 0.1 } else { 0.0 };
                assert_relative_eq!(t.matrix()[(i, j)].re, want, epsilon = 1e-16);
            }
        }
        assert_relative_eq!(t.trace_energy(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn psd_examples() {
        let id = real(3, |i, j| if i == j { 1.0 } else { 0.0 });
        let c = is_psd(&id, 1e-12).unwrap();
        assert!(c.is_psd);
        assert_relative_eq!(c.min_eigenvalue, 1.0, epsilon = 1e-14);
        let ind = real(2, |i, j| if i == j { 1.0 } else { 2.0 });
        let c = is_psd(&ind, 1e-12).unwrap();
        assert!(!c.is_psd);
        assert_relative_eq!(c.min_eigenvalue, -1.0, epsilon = 1e-14);
    }

    #[test]
    fn psd_fit_keeps_feasible_toeplitz() {
        for method in [PsdFitMethod::DualQuasiNewton, PsdFitMethod::Dykstra] {
            let opts = PsdFitOptions {
                method,
                ..Default::default()
            };
            let fit = psd_fit_with(&coeffs(&[1.0, 0.5]), &opts).unwrap();
            let r = fit.matrix.matrix();
            assert_relative_eq!(r.trace().re, 1.0, epsilon = 1e-12);
            assert_relative_eq!(r[(0, 1)].re, 0.5, epsilon = 1e-12);
            assert!(fit.min_eigenvalue > -1e-12);
        }
    }

    #[test]
    fn dual_and_dykstra_agree() {
        // 1 + 0.9 cos 2u >= 0.1, yet the Toeplitz corner block has eigenvalue 1/3 - 0.45
        let c = coeffs(&[1.0, 0.0, 0.45]);
        let t = toeplitz_from_coeffs(&c).unwrap();
        assert!(!is_psd(&t, 1e-12).unwrap().is_psd);
        let base = PsdFitOptions {
            tol: 1e-10,
            max_iter: 200_000,
            ..Default::default()
        };
        let dual = psd_fit_with(&c, &base).unwrap();
        let dyk = psd_fit_with(
            &c,
            &PsdFitOptions {
                method: PsdFitMethod::Dykstra,
                ..base
            },
        )
        .unwrap();
        let diff = dual.matrix.matrix().sub(dyk.matrix.matrix()).frobenius_norm();
        assert!(diff < 1e-6, "projections differ by {diff}");
    }

    #[test]
    fn psd_fit_reports_infeasible_coefficients() {
        // 1 + 2 cos u * 0.9 goes negative near u = pi: no PSD realization exists
        let c = coeffs(&[1.0, 0.9]);
        let err = psd_fit(&c, false, 300, 1e-9).unwrap_err();
        assert!(matches!(err, Error::PsdFitNotConverged { .. }), "{err}");
    }

    #[test]
    fn tbp_of_identity_and_rank_one() {
        let id = real(4, |i, j| if i == j { 1.0 } else { 0.0 });
        let w = tbp_weights(&id).unwrap();
        assert_eq!(w.rank(), 4);
        assert!(w.correlation().sub(id.matrix()).frobenius_norm() < 1e-14);

        let v = [0.5, -0.5, 0.5, 0.5];
        let r1 = real(4, |i, j| v[i] * v[j]);
        let w = tbp_weights(&r1).unwrap();
        assert_eq!(w.rank(), 1);
        let col: Vec<f64> = (0..4).map(|i| w.entries()[(i, 0)].re).collect();
        let dot: f64 = col.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert_relative_eq!(dot.abs(), 1.0, epsilon = 1e-12);
        assert!(w.correlation().sub(r1.matrix()).frobenius_norm() < 1e-14);
    }

    #[test]
    fn tbp_rejects_indefinite() {
        let ind = real(2, |i, j| if i == j { 1.0 } else { 2.0 });
        assert!(tbp_weights(&ind).is_err());
    }
}
