//! Output documents written by the subcommands.

use serde::{Deserialize, Serialize};

use scotopic::analysis::{MeritReport, ParameterSummary, ReplicationRecord};
use scotopic::nmax::{CutoffCalibration, DetectionStep};
use scotopic::pipeline::CellReport;
use scotopic::simulate::SimulationResult;

use crate::config::CellSpec;

/// Simulated experiment with its generating setup, as written by `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimFile {
    pub schema_version: u32,
    pub result: SimulationResult,
}

/// Cached threshold calibration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub schema_version: u32,
    pub key: String,
    pub calibration: CutoffCalibration,
}

/// Ensemble accuracy at one data point: observed, reconstructed, generated.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleRow {
    pub nbar: f64,
    pub raw_fraction: f64,
    pub posterior_mean: f64,
    pub truth: f64,
}

/// Reconstruction summary, the chains themselves go to `chains.csv`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryFile {
    pub schema_version: u32,
    pub n_max_final: usize,
    pub p_min_final: f64,
    pub flagged: bool,
    pub r_sd: f64,
    pub mse: f64,
    pub ensemble_vote: bool,
    pub accuracy_summaries: Vec<ParameterSummary>,
    pub extension_summary: ParameterSummary,
    pub truth: Vec<f64>,
    pub ensemble: Vec<EnsembleRow>,
    pub record: ReplicationRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_recovery: Option<bool>,
}

/// Slim cutoff-search record.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NmaxFile {
    pub schema_version: u32,
    pub n_max_final: usize,
    pub trace: Vec<DetectionStep>,
}

/// One finished sweep cell, the unit of checkpointing.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellFile {
    pub schema_version: u32,
    pub cell: CellSpec,
    pub seed: u64,
    /// Fingerprint of the resolved sweep settings; a mismatch forces a
    /// recompute on resume.
    pub fingerprint: String,
    pub thresholds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<CellReport>,
    /// Merit per rejection threshold, parallel to `thresholds`.
    pub merits: Vec<Option<MeritReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}
