use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, HarnessError};
use crate::metrics::FidelityReport;

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Summary written next to every run's CSVs as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// RFC 3339, UTC.
    pub timestamp: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<FidelityReport>,
    /// Operation-specific results (best controls, sweep summaries, ...).
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub results: serde_json::Value,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
    pub duration_s: f64,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// The same manifest with the run-dependent fields blanked.
    pub fn without_timing(&self) -> Self {
        Self { timestamp: String::new(), duration_s: 0.0, ..self.clone() }
    }
}

/// Files of one run. Everything written is removed again unless the set is
/// committed, so a failed run leaves no partial outputs behind.
pub(crate) struct OutputSet {
    dir: PathBuf,
    written: Vec<PathBuf>,
    committed: bool,
}

impl OutputSet {
    pub(crate) fn create(dir: &Path) -> Result<Self, HarnessError> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new(), committed: false })
    }

    pub(crate) fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, HarnessError> {
        let path = self.dir.join(name);
        if let Err(e) = fs::write(&path, contents) {
            let _ = fs::remove_file(&path);
            return Err(HarnessError::Io(format!("{}: {e}", path.display())));
        }
        self.written.push(path.clone());
        Ok(path)
    }

    pub(crate) fn names(&self) -> Vec<String> {
        self.written.iter().map(|p| p.display().to_string()).collect()
    }

    /// Writes `manifest.json` and keeps every file.
    pub(crate) fn commit(mut self, manifest: &RunManifest) -> Result<Vec<String>, HarnessError> {
        self.write("manifest.json", &manifest.to_json())?;
        self.committed = true;
        Ok(self.names())
    }
}

impl Drop for OutputSet {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}
