//! Serializable run summary shared by every pipeline stage.

use serde::{Deserialize, Serialize};

/// Fields are filled by whichever stages ran; absent ones are omitted from JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elements: Option<usize>,
    /// Achieved equiripple magnitude.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimated_delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stopband_peak_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passband_ripple: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extremal_angles: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_eigenvalue: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub is_psd: Option<bool>,
    /// `max_l |diag_sum_l - r_l| / |r_0|` of the realized matrix.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coefficient_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_spread: Option<f64>,
    /// `||W W^H - R||_F / ||R||_F`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factorization_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective_initial: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective_final: Option<f64>,
    /// Objective at the start, every penalty interval, and at the end.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective_trace: Option<Vec<f64>>,
    /// `max_m |beta_m^2 / beta_m^2(0) - 1|`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraint_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth_ratio_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth_ratio_max: Option<f64>,
    /// Peak off-diagonal correlation magnitude over the diagonal level.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub off_diagonal_ratio: Option<f64>,
    /// Uniform deviation between the achieved and the target beampattern.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pattern_deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl DesignReport {
    /// True when every populated float is finite.
    pub fn is_finite(&self) -> bool {
        let scalars = [
            self.delta,
            self.estimated_delta,
            self.stopband_peak_db,
            self.passband_ripple,
            self.min_eigenvalue,
            self.coefficient_residual,
            self.power_spread,
            self.factorization_error,
            self.objective_initial,
            self.objective_final,
            self.constraint_residual,
            self.bandwidth_ratio_min,
            self.bandwidth_ratio_max,
            self.off_diagonal_ratio,
            self.pattern_deviation,
            self.wall_time_s,
        ];
        let vectors = [&self.extremal_angles, &self.objective_trace];
        scalars.iter().flatten().all(|v| v.is_finite())
            && vectors.iter().all(|v| v.as_ref().is_none_or(|v| v.iter().all(|x| x.is_finite())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_omits_empty_fields() {
        let r = DesignReport {
            delta: Some(0.011917),
            extremal_angles: Some(vec![0.0, 0.5]),
            converged: Some(true),
            ..Default::default()
        };
        let s = serde_json::to_string(&r).unwrap();
        assert!(!s.contains("min_eigenvalue"));
        let back: DesignReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        assert!(r.is_finite());
    }
}
