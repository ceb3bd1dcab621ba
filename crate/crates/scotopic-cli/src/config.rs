//! On-disk configuration documents. Every document carries a schema version
//! and rejects unknown keys, so stale or misspelled settings fail loudly
//! instead of silently falling back to defaults.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use scotopic::mcmc::McmcConfig;
use scotopic::nmax::DetectConfig;
use scotopic::perception::PerceptionModel;
use scotopic::prior::MAX_NMAX;
use scotopic::source::SourceConfig;

pub const SCHEMA_VERSION: u32 = 1;

pub fn check_schema(version: u32, what: &str) -> Result<()> {
    if version != SCHEMA_VERSION {
        bail!("{what} has schema version {version}, this build reads {SCHEMA_VERSION}");
    }
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Intensity grid and trial plan, with the pulse noise given either as an
/// explicit per-point vector or as one scale relative to the intensity.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub nbar_min: f64,
    pub nbar_max: f64,
    pub points: usize,
    pub trials: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sd: Option<Vec<f64>>,
    /// Per-point noise as `scale * nbar`; exclusive with `noise_sd`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_scale: Option<f64>,
}

impl SourceSpec {
    pub fn build(&self) -> Result<SourceConfig> {
        let noise = match (&self.noise_sd, self.noise_scale) {
            (Some(_), Some(_)) => bail!("give either noise_sd or noise_scale, not both"),
            (Some(sd), None) => sd.clone(),
            (None, scale) => {
                let s = scale.unwrap_or(0.0);
                let grid = SourceConfig::noiseless(
                    self.nbar_min,
                    self.nbar_max,
                    self.points,
                    self.trials,
                )?
                .nbar_grid();
                grid.iter().map(|nbar| s * nbar).collect()
            }
        };
        Ok(SourceConfig::new(
            self.nbar_min,
            self.nbar_max,
            self.points,
            self.trials,
            noise,
        )?)
    }
}

/// Observer model: either a one-photon detection probability, expanded into
/// accuracies sized to the intensity grid, or an explicit accuracy table
/// starting at chance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracies: Option<Vec<f64>>,
}

impl ModelSpec {
    pub fn build(&self, nbar_max: f64) -> Result<PerceptionModel> {
        match (self.p1, &self.accuracies) {
            (Some(_), Some(_)) => bail!("give either p1 or accuracies, not both"),
            (Some(p1), None) => Ok(PerceptionModel::from_p1_for_intensity(p1, nbar_max)?),
            (None, Some(acc)) => Ok(PerceptionModel::from_accuracies(acc.clone())?),
            (None, None) => bail!("the model needs p1 or accuracies"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub schema_version: u32,
    pub source: SourceSpec,
    pub model: ModelSpec,
}

/// Settings for the on-demand threshold calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSpec {
    #[serde(default = "default_calibration_draws")]
    pub draws: usize,
    #[serde(default = "default_calibration_replications")]
    pub replications: usize,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        CalibrationSpec {
            draws: default_calibration_draws(),
            replications: default_calibration_replications(),
        }
    }
}

fn default_calibration_draws() -> usize {
    2_000
}

fn default_calibration_replications() -> usize {
    2_000
}

fn default_hdi_mass() -> f64 {
    0.95
}

fn default_max_nmax() -> usize {
    MAX_NMAX
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructConfig {
    pub schema_version: u32,
    #[serde(default = "McmcConfig::low")]
    pub low: McmcConfig,
    #[serde(default = "McmcConfig::high")]
    pub high: McmcConfig,
    #[serde(default = "default_max_nmax")]
    pub max_nmax: usize,
    #[serde(default = "default_hdi_mass")]
    pub hdi_mass: f64,
    #[serde(default)]
    pub p_min: f64,
    /// Take the top accuracy's posterior mode itself as the next probe floor
    /// instead of mapping it back to the probability scale.
    #[serde(default)]
    pub accuracy_floor: bool,
    /// Rerun the search against a flattened likelihood and record whether
    /// the prior passed through untouched.
    #[serde(default)]
    pub flat_check: bool,
    #[serde(default)]
    pub calibration: CalibrationSpec,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        ReconstructConfig {
            schema_version: SCHEMA_VERSION,
            low: McmcConfig::low(),
            high: McmcConfig::high(),
            max_nmax: MAX_NMAX,
            hdi_mass: default_hdi_mass(),
            p_min: 0.0,
            accuracy_floor: false,
            flat_check: false,
            calibration: CalibrationSpec::default(),
        }
    }
}

impl ReconstructConfig {
    pub fn detect(&self) -> DetectConfig {
        DetectConfig {
            low: self.low.clone(),
            high: self.high.clone(),
            accuracy_scale_floor: self.accuracy_floor,
            max_nmax: self.max_nmax,
        }
    }
}

/// Grid of designs: the cartesian product of every axis, each cell
/// replicated and scored once per rejection threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub schema_version: u32,
    pub nbar_min: Vec<f64>,
    pub nbar_max: Vec<f64>,
    pub points: Vec<usize>,
    pub trials: Vec<u32>,
    pub p1: Vec<f64>,
    #[serde(default = "default_noise_axis")]
    pub noise_scale: Vec<f64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_thresholds")]
    pub r_sd_thresholds: Vec<f64>,
    #[serde(default = "default_hdi_mass")]
    pub hdi_mass: f64,
    #[serde(default = "McmcConfig::low")]
    pub low: McmcConfig,
    #[serde(default = "McmcConfig::high")]
    pub high: McmcConfig,
    #[serde(default = "default_max_nmax")]
    pub max_nmax: usize,
    #[serde(default)]
    pub p_min: f64,
    #[serde(default)]
    pub accuracy_floor: bool,
    /// Score success rates with a beta(k+1, 101) posterior no matter how
    /// many replications actually ran.
    #[serde(default)]
    pub fixed_denominator: bool,
    #[serde(default)]
    pub calibration: CalibrationSpec,
}

fn default_noise_axis() -> Vec<f64> {
    vec![0.0]
}

fn default_replications() -> usize {
    30
}

fn default_thresholds() -> Vec<f64> {
    vec![-5.0, -10.0]
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version, "sweep config")?;
        let axes = [
            ("nbar_min", self.nbar_min.len()),
            ("nbar_max", self.nbar_max.len()),
            ("points", self.points.len()),
            ("trials", self.trials.len()),
            ("p1", self.p1.len()),
            ("noise_scale", self.noise_scale.len()),
        ];
        for (name, len) in axes {
            if len == 0 {
                bail!("sweep axis {name} is empty");
            }
        }
        if self.replications == 0 {
            bail!("sweep needs at least 1 replication per cell");
        }
        if self.r_sd_thresholds.is_empty() {
            bail!("sweep needs at least one r_sd threshold");
        }
        Ok(())
    }

    /// Cells in row-major order: `nbar_min` varies slowest, `noise_scale`
    /// fastest. The order fixes each cell's index and therefore its seed.
    pub fn cells(&self) -> Vec<CellSpec> {
        let mut cells = Vec::new();
        for &nbar_min in &self.nbar_min {
            for &nbar_max in &self.nbar_max {
                for &points in &self.points {
                    for &trials in &self.trials {
                        for &p1 in &self.p1 {
                            for &noise_scale in &self.noise_scale {
                                cells.push(CellSpec {
                                    index: cells.len(),
                                    nbar_min,
                                    nbar_max,
                                    points,
                                    trials,
                                    p1,
                                    noise_scale,
                                });
                            }
                        }
                    }
                }
            }
        }
        cells
    }

    pub fn detect(&self) -> DetectConfig {
        DetectConfig {
            low: self.low.clone(),
            high: self.high.clone(),
            accuracy_scale_floor: self.accuracy_floor,
            max_nmax: self.max_nmax,
        }
    }
}

/// One design drawn from the sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub index: usize,
    pub nbar_min: f64,
    pub nbar_max: f64,
    pub points: usize,
    pub trials: u32,
    pub p1: f64,
    pub noise_scale: f64,
}

impl CellSpec {
    pub fn source(&self) -> Result<SourceConfig> {
        SourceSpec {
            nbar_min: self.nbar_min,
            nbar_max: self.nbar_max,
            points: self.points,
            trials: self.trials,
            noise_sd: None,
            noise_scale: Some(self.noise_scale),
        }
        .build()
    }

    pub fn model(&self) -> Result<PerceptionModel> {
        Ok(PerceptionModel::from_p1_for_intensity(self.p1, self.nbar_max)?)
    }
}
