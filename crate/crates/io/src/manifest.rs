//! Run manifest: everything needed to reproduce a sweep, plus what it wrote.

use std::path::Path;

use recsim_core::RealizationSeeds;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// The full explicit sweep configuration, as accepted by `load_config`.
    pub config: serde_json::Value,
    pub master_seed: u64,
    pub workers: usize,
    pub t_snapshot: usize,
    pub cells: Vec<CellManifest>,
    /// Paths relative to the manifest's directory.
    pub files: Vec<String>,
    #[serde(default)]
    pub figures: Vec<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellManifest {
    pub cell_id: String,
    /// A number such as `"0.4"` or `"uniform_random"`.
    pub beta_cond: String,
    pub strategy: String,
    pub epsilon: f64,
    pub teacher: TeacherSummary,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub realizations: Vec<RealizationManifest>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherSummary {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub latent_scale: f64,
    pub regenerated_per_realization: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationManifest {
    pub index: usize,
    pub seeds: RealizationSeeds,
    pub wall_clock_secs: f64,
    pub training_epochs: usize,
}

impl RunManifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}
