//! Run manifest: config echo, stage outputs with digests, and results.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::formats::{read_json, sha256_file, write_json};
use crate::jump_stats::JumpStatsResult;
use crate::spectral::PedestalFit;
use crate::telegraph::SpectralPrediction;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub stage: String,
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub target: f64,
    pub rule: String,
    pub passed: bool,
}

impl Check {
    /// `|measured/target − 1| ≤ tol`.
    pub fn relative(name: &str, measured: f64, target: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            target,
            rule: format!("within {:.0}% of target", tol * 100.0),
            passed: ((measured / target) - 1.0).abs() <= tol,
        }
    }

    /// `measured ≤ limit`.
    pub fn at_most(name: &str, measured: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            target: limit,
            rule: "at most target".into(),
            passed: measured <= limit,
        }
    }

    /// `|measured − target| ≤ tol`.
    pub fn absolute(name: &str, measured: f64, target: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            target,
            rule: format!("within ±{tol:.4} of target"),
            passed: (measured - target).abs() <= tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub band: (f64, f64),
    pub band_rms: f64,
    pub n_bins: usize,
    pub tolerance: f64,
    pub within: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software: String,
    pub version: String,
    pub config: RunConfig,
    pub seeds: BTreeMap<String, u64>,
    pub outputs: Vec<OutputRecord>,
    pub prediction: Option<SpectralPrediction>,
    pub pedestal_fit: Option<PedestalFit>,
    pub conditional_fit: Option<PedestalFit>,
    pub comparison: Option<ComparisonSummary>,
    pub jump_stats: Option<JumpStatsResult>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(config: &RunConfig, seeds: BTreeMap<String, u64>) -> Self {
        let mut config = config.clone();
        // output location is not part of the run's identity
        config.run.out = None;
        Self {
            software: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seeds,
            outputs: Vec::new(),
            prediction: None,
            pedestal_fit: None,
            conditional_fit: None,
            comparison: None,
            jump_stats: None,
            checks: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Hashes `dir/file` and records it, replacing an earlier record of the
    /// same path.
    pub fn record(&mut self, dir: &Path, stage: &str, file: &str) -> Result<()> {
        let full = dir.join(file);
        let rec = OutputRecord {
            stage: stage.into(),
            path: file.into(),
            sha256: sha256_file(&full)?,
            bytes: std::fs::metadata(&full)?.len(),
        };
        match self.outputs.iter_mut().find(|o| o.path == file) {
            Some(o) => *o = rec,
            None => self.outputs.push(rec),
        }
        Ok(())
    }

    pub fn output(&self, file: &str) -> Option<&OutputRecord> {
        self.outputs.iter().find(|o| o.path == file)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_FILE), self)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        read_json(&dir.join(MANIFEST_FILE))
    }

    /// Every referenced file exists and matches its digest.
    pub fn verify_outputs(&self, dir: &Path) -> Result<()> {
        for o in &self.outputs {
            let full = dir.join(&o.path);
            if !full.exists() {
                return Err(Error::invalid(format!("manifest references missing file {}", o.path)));
            }
            let digest = sha256_file(&full)?;
            if digest != o.sha256 {
                return Err(Error::invalid(format!("digest mismatch for {}", o.path)));
            }
        }
        Ok(())
    }
}
