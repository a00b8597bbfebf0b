//! Dense BFGS with backtracking line search.
//!
//! The driver is step-wise so callers can change the objective between steps
//! (penalty schedules) and veto trial points through a feasibility predicate.

/// Line-search and scaling parameters.
#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    /// Max-norm of the very first trial step.
    pub initial_step: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            initial_step: 1e-1,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Accepted,
    /// No acceptable point along the search direction, even after a reset to
    /// steepest descent.
    Stalled,
}

/// Objective with gradient: writes the gradient into the second argument and
/// returns the value.
pub trait Objective {
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Objective for F {
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        self(x, grad)
    }
}

pub struct Bfgs {
    n: usize,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    /// Inverse Hessian approximation, row-major.
    h: Vec<f64>,
    scaled: bool,
    opts: BfgsOptions,
}

impl Bfgs {
    pub fn new(x0: Vec<f64>, objective: &mut impl Objective, opts: BfgsOptions) -> Self {
        let n = x0.len();
        let mut g = vec![0.0; n];
        let f = objective.eval(&x0, &mut g);
        let gmax = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let h0 = if gmax > 0.0 { opts.initial_step / gmax } else { 1.0 };
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = h0;
        }
        Self {
            n,
            x: x0,
            f,
            g,
            h,
            scaled: false,
            opts,
        }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn value(&self) -> f64 {
        self.f
    }

    pub fn gradient(&self) -> &[f64] {
        &self.g
    }

    pub fn grad_inf_norm(&self) -> f64 {
        self.g.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Re-evaluates value and gradient at the current point, e.g. after a
    /// penalty weight changed. The curvature estimate is kept.
    pub fn refresh(&mut self, objective: &mut impl Objective) {
        self.f = objective.eval(&self.x, &mut self.g);
    }

    fn direction(&self) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| -(0..n).map(|j| self.h[i * n + j] * self.g[j]).sum::<f64>())
            .collect()
    }

    fn reset_curvature(&mut self) {
        let n = self.n;
        let gmax = self.grad_inf_norm();
        let h0 = if gmax > 0.0 { self.opts.initial_step / gmax } else { 1.0 };
        self.h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            self.h[i * n + i] = h0;
        }
        self.scaled = false;
    }

    /// Takes one quasi-Newton step. Trial points rejected by `feasible` are
    /// treated like points failing the Armijo test.
    pub fn step(&mut self, objective: &mut impl Objective, feasible: &dyn Fn(&[f64]) -> bool) -> StepOutcome {
        for attempt in 0..2 {
            let mut d = self.direction();
            let mut slope: f64 = d.iter().zip(&self.g).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                self.reset_curvature();
                d = self.direction();
                slope = d.iter().zip(&self.g).map(|(a, b)| a * b).sum();
                if !(slope < 0.0) {
                    return StepOutcome::Stalled;
                }
            }
            let mut alpha = 1.0;
            let mut trial = vec![0.0; self.n];
            let mut g_new = vec![0.0; self.n];
            for _ in 0..self.opts.max_backtracks {
                for i in 0..self.n {
                    trial[i] = self.x[i] + alpha * d[i];
                }
                if feasible(&trial) {
                    let f_new = objective.eval(&trial, &mut g_new);
                    if f_new.is_finite() && self.acceptable(f_new, &g_new, &d, alpha, slope) {
                        self.accept(trial, f_new, g_new);
                        return StepOutcome::Accepted;
                    }
                }
                alpha *= 0.5;
            }
            if attempt == 0 {
                self.reset_curvature();
            }
        }
        StepOutcome::Stalled
    }

    /// Armijo with strict decrease, or, once value differences are at rounding
    /// level, the approximate Wolfe test on the directional derivative.
    fn acceptable(&self, f_new: f64, g_new: &[f64], d: &[f64], alpha: f64, slope: f64) -> bool {
        if f_new < self.f && f_new <= self.f + self.opts.armijo * alpha * slope {
            return true;
        }
        if f_new > self.f + 1e-12 * self.f.abs() {
            return false;
        }
        let dg: f64 = d.iter().zip(g_new).map(|(a, b)| a * b).sum();
        g_new.iter().zip(&self.g).any(|(a, b)| a != b) && dg >= 0.9 * slope && dg <= -0.8 * slope
    }

    fn accept(&mut self, x_new: Vec<f64>, f_new: f64, g_new: Vec<f64>) {
        let n = self.n;
        let s: Vec<f64> = x_new.iter().zip(&self.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&self.g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        self.x = x_new;
        self.f = f_new;
        self.g = g_new;
        if !(sy > 1e-12 * (ss * yy).sqrt()) || sy <= 0.0 {
            return;
        }
        if !self.scaled {
            let gamma = sy / yy;
            self.h.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..n {
                self.h[i * n + i] = gamma;
            }
            self.scaled = true;
        }
        // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
        let rho = 1.0 / sy;
        let hy: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| self.h[i * n + j] * y[j]).sum())
            .collect();
        let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
        let coef = rho * rho * yhy + rho;
        for i in 0..n {
            for j in 0..n {
                self.h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
            }
        }
    }
}

/// Central-difference gradient with step `h * max(1, |x_i|)`.
pub fn central_difference(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let step = h * x[i].abs().max(1.0);
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}
