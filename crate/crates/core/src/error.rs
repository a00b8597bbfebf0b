use thiserror::Error;

use crate::cheb_design::RemezResult;
use crate::corr_synth::CorrelationMatrix;

/// Errors produced by the synthesis pipeline.
#[derive(Debug, Error, Clone)]
pub enum Error {
    /// Caller supplied something outside an operation's domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An iterative method ran out of iterations. `residual` is the last
    /// measured convergence quantity for that method.
    #[error("{method} did not converge after {iterations} iterations (residual {residual:.3e}): {detail}")]
    NonConvergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
        detail: String,
    },

    /// The Remez exchange hit its iteration cap; `last` is the final iterate.
    #[error("Remez exchange did not converge after {} iterations (ripple spread {residual:.3e})", last.iterations)]
    RemezNotConverged { residual: f64, last: Box<RemezResult> },

    /// No PSD matrix reproducing the coefficients was found. `last` is the
    /// final PSD iterate.
    #[error("PSD fit did not converge after {iterations} iterations (coefficient residual {residual:.3e}, power spread {power_spread:.3e})")]
    PsdFitNotConverged {
        iterations: usize,
        residual: f64,
        power_spread: f64,
        last: Box<CorrelationMatrix>,
    },

    /// A numerical quantity that must be (nearly) real carried an imaginary part.
    #[error("imaginary residue {residue:.3e} exceeds tolerance {tolerance:.3e}")]
    ImaginaryResidue { residue: f64, tolerance: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
