//! Equiripple MIMO transmit beampattern synthesis.
//!
//! Designs minimax cosine-series beampatterns with a Remez exchange, realizes
//! them as waveform correlation matrices (Toeplitz or PSD-fitted), factors
//! those into transmit-beamspace weights, and optimizes constant-envelope
//! MTSFM waveform sets whose correlations carry the design.

pub mod beampattern;
pub mod cheb_design;
pub mod corr_synth;
pub mod error;
pub mod linalg;
pub mod mtsfm;
pub mod optim;
pub mod report;

pub use beampattern::{
    default_grid, metrics, pattern_from_coeffs, pattern_from_matrix, pattern_from_waveforms, steering_vector,
    PatternMetrics, PatternSamples, PatternSource, SteeringVector, DEFAULT_GRID_SIZE,
};
pub use cheb_design::{
    estimate_elements, estimate_ripple, eval_cosine_poly, lp_minimax_oracle, remez_design, ApproxGrid, Band, BandSpec,
    CosineCoeffs, RemezResult, DEFAULT_GRID_DENSITY,
};
pub use corr_synth::{
    apply_tbp, diagonal_sums, is_psd, psd_fit, psd_fit_with, tbp_weights, toeplitz_from_coeffs, CorrelationMatrix,
    PsdCheck, PsdFit, PsdFitMethod, PsdFitOptions, TbpWeights,
};
pub use error::{Error, Result};
pub use linalg::CMatrix;
pub use mtsfm::{
    correlation, fit_coeffs, orthogonalize, rms_bandwidth, seeded_init, synthesize, GradientMode, MtsfmParams,
    OptimizerConfig, WaveformSet,
};
pub use num_complex::Complex64;
pub use report::DesignReport;
