//! JSON design spec files. Angles are stored in units of `pi`.

use std::fmt;
use std::path::{Path, PathBuf};

use beamforge::{estimate_elements, BandSpec, GradientMode, OptimizerConfig, DEFAULT_GRID_DENSITY};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Toeplitz,
    PsdFit,
    Tbp,
    Waveforms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Match the diagonal sums of a target coefficient file.
    #[default]
    Fit,
    /// Drive the correlation matrix toward a scaled identity.
    Orthogonalize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elements {
    Count(usize),
    Auto,
}

impl<'de> Deserialize<'de> for Elements {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Elements;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive element count or \"auto\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Elements, E> {
                if v == 0 {
                    return Err(E::invalid_value(de::Unexpected::Unsigned(v), &self));
                }
                Ok(Elements::Count(v as usize))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Elements, E> {
                if v <= 0 {
                    return Err(E::invalid_value(de::Unexpected::Signed(v), &self));
                }
                Ok(Elements::Count(v as usize))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Elements, E> {
                match v {
                    "auto" => Ok(Elements::Auto),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerBlock {
    pub objective: Objective,
    /// Samples per waveform.
    pub samples: usize,
    /// Sine harmonics per waveform.
    pub harmonics: usize,
    pub mu: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub gradient_mode: GradientMode,
    pub sample_rate: f64,
    pub penalty_weight: f64,
    pub penalty_interval: usize,
    pub inner_fraction: f64,
}

impl Default for OptimizerBlock {
    fn default() -> Self {
        let c = OptimizerConfig::default();
        Self {
            objective: Objective::Fit,
            samples: beamforge::mtsfm::DEFAULT_SAMPLES,
            harmonics: beamforge::mtsfm::DEFAULT_HARMONICS,
            mu: c.mu,
            max_iter: c.max_iter,
            seed: c.seed,
            gradient_mode: c.gradient_mode,
            sample_rate: c.sample_rate,
            penalty_weight: c.penalty_weight,
            penalty_interval: c.penalty_interval,
            inner_fraction: c.inner_fraction,
        }
    }
}

impl OptimizerBlock {
    pub fn config(&self) -> OptimizerConfig {
        OptimizerConfig {
            mu: self.mu,
            max_iter: self.max_iter,
            seed: self.seed,
            gradient_mode: self.gradient_mode,
            sample_rate: self.sample_rate,
            penalty_weight: self.penalty_weight,
            penalty_interval: self.penalty_interval,
            inner_fraction: self.inner_fraction,
            ..OptimizerConfig::default()
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    passband_edge: f64,
    stopband_edge: f64,
    #[serde(default = "one")]
    passband_level: f64,
    stopband_level: f64,
    #[serde(default = "one")]
    weight_ratio: f64,
    elements: Elements,
    target_delta: Option<f64>,
    #[serde(default = "one")]
    energy: f64,
    mode: Mode,
    #[serde(default)]
    equal_power: bool,
    grid_density: Option<usize>,
    #[serde(default)]
    optimizer: OptimizerBlock,
    out: Option<PathBuf>,
}

/// A parsed and checked spec file.
#[derive(Debug, Clone)]
pub struct DesignSpecFile {
    pub band: BandSpec,
    pub elements: usize,
    /// Set when the element count came from the length estimate.
    pub target_delta: Option<f64>,
    pub energy: f64,
    pub mode: Mode,
    pub equal_power: bool,
    pub grid_density: usize,
    pub optimizer: OptimizerBlock,
    pub out: Option<PathBuf>,
}

fn field(name: &str, msg: impl fmt::Display) -> CliError {
    CliError::Input(format!("spec field `{name}`: {msg}"))
}

impl DesignSpecFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let raw: RawSpec = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." || path.is_empty() {
                CliError::Input(format!("spec: {inner}"))
            } else {
                field(&path, inner)
            }
        })?;
        Self::check(raw)
    }

    fn check(raw: RawSpec) -> CliResult<Self> {
        let open_unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(field(name, format!("must lie in (0, 1) in units of pi, got {v}")))
            }
        };
        open_unit("passband_edge", raw.passband_edge)?;
        open_unit("stopband_edge", raw.stopband_edge)?;
        if raw.stopband_edge <= raw.passband_edge {
            return Err(field(
                "stopband_edge",
                format!("must exceed passband_edge ({} <= {})", raw.stopband_edge, raw.passband_edge),
            ));
        }
        if !(raw.passband_level > 0.0 && raw.passband_level.is_finite()) {
            return Err(field("passband_level", "must be positive"));
        }
        if !(raw.stopband_level >= 0.0 && raw.stopband_level < raw.passband_level) {
            return Err(field("stopband_level", "must lie in [0, passband_level)"));
        }
        if !(raw.weight_ratio > 0.0 && raw.weight_ratio.is_finite()) {
            return Err(field("weight_ratio", "must be positive"));
        }
        if !(raw.energy > 0.0 && raw.energy.is_finite()) {
            return Err(field("energy", "must be positive"));
        }
        let band = BandSpec::from_normalized(raw.passband_edge, raw.stopband_edge, raw.passband_level, raw.stopband_level)
            .and_then(|b| b.with_weight_ratio(raw.weight_ratio))
            .map_err(|e| field("passband_edge", e))?;

        let (elements, target_delta) = match raw.elements {
            Elements::Count(m) => (m, None),
            Elements::Auto => {
                let delta = raw
                    .target_delta
                    .ok_or_else(|| field("target_delta", "required when elements is \"auto\""))?;
                let m = estimate_elements(delta, &band).map_err(|e| field("target_delta", e))?;
                (m, Some(delta))
            }
        };
        if elements < 2 {
            return Err(field("elements", format!("need at least 2 elements, got {elements}")));
        }
        let grid_density = raw.grid_density.unwrap_or(DEFAULT_GRID_DENSITY);
        if grid_density < 8 {
            return Err(field("grid_density", "must be at least 8"));
        }
        let opt = &raw.optimizer;
        if !(opt.mu > 0.0 && opt.mu < 1.0) {
            return Err(field("optimizer.mu", format!("must lie in (0, 1), got {}", opt.mu)));
        }
        if opt.harmonics == 0 || opt.samples <= 2 * opt.harmonics {
            return Err(field("optimizer.samples", "need samples > 2 * harmonics >= 2"));
        }
        opt.config().validate().map_err(|e| field("optimizer", e))?;
        Ok(Self {
            band,
            elements,
            target_delta,
            energy: raw.energy,
            mode: raw.mode,
            equal_power: raw.equal_power,
            grid_density,
            optimizer: raw.optimizer,
            out: raw.out,
        })
    }
}
