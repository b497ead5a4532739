//! Pipeline configuration: every tunable with its default, loaded from JSON.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blob_extract::DEFAULT_MIN_BLOB_AREA;
use crate::blob_merge::ThresholdRule;
use crate::error::{Error, Result};
use crate::gabor_bank::{make_bank, BankSpec, ConvolutionPath};
use crate::tracker::TrackerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlobConfig {
    pub min_blob_area: usize,
    /// Write each fused energy frame as a 16-bit PNG into this directory.
    pub debug_energy_dir: Option<String>,
}

impl Default for BlobConfig {
    fn default() -> Self {
        Self {
            min_blob_area: DEFAULT_MIN_BLOB_AREA,
            debug_energy_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MergeConfig {
    pub threshold_rule: ThresholdRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Number of evenly spaced start frames for the temporal robustness run.
    pub tre_starts: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { tre_starts: 20 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub gabor: BankSpec,
    pub convolution: ConvolutionPath,
    pub blob: BlobConfig,
    pub merge: MergeConfig,
    pub tracker: TrackerConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        make_bank::<f64>(&self.gabor).map_err(|e| match e {
            Error::Config(m) | Error::Shape(m) => Error::Config(format!("gabor: {m}")),
            other => other,
        })?;
        if self.blob.min_blob_area == 0 {
            return Err(Error::Config("blob.min_blob_area must be at least 1".into()));
        }
        if self.eval.tre_starts == 0 {
            return Err(Error::Config("eval.tre_starts must be at least 1".into()));
        }
        self.tracker.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
