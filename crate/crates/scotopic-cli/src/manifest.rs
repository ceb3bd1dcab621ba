//! Run manifests. A manifest records everything a run depended on: the
//! resolved configuration with all flags folded in, the master seed, the
//! derived per-cell seeds and the exact calibration in effect. Feeding it
//! back through `--from-manifest` reproduces every output byte for byte.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

use scotopic::nmax::CutoffCalibration;

use crate::config::{check_schema, load_json, SCHEMA_VERSION};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub master_seed: u64,
    /// Resolved settings of the run, command-line overrides included.
    pub config: serde_json::Value,
    /// Per-cell seeds, sweep runs only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cell_seeds: Vec<u64>,
    /// Cache key of the threshold calibration in effect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_key: Option<String>,
    /// The calibration itself, so a replay never depends on the cache.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CutoffCalibration>,
    /// Fingerprint of the input data file, reconstruct runs only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_fingerprint: Option<String>,
    pub created_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str, master_seed: u64, config: serde_json::Value) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            master_seed,
            config,
            cell_seeds: Vec::new(),
            calibration_key: None,
            calibration: None,
            input_fingerprint: None,
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

/// Loads a manifest and checks that it drives the requested command.
pub fn load_for(command: &str, path: &Path) -> Result<RunManifest> {
    let m: RunManifest = load_json(path)?;
    check_schema(m.schema_version, "manifest")?;
    if m.command != command {
        bail!(
            "manifest at {} records a `{}` run, not `{command}`",
            path.display(),
            m.command
        );
    }
    Ok(m)
}

/// FNV-1a over raw bytes, hex encoded.
pub fn fingerprint(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}
