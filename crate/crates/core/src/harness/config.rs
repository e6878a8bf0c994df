use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ReqError, Result};
use crate::learner::LearnerConfig;

/// Environment variable naming the directory under which runs are created.
pub const OUTPUT_ROOT_VAR: &str = "REQ_OUTPUT_ROOT";

/// The output root: `$REQ_OUTPUT_ROOT`, or `runs` in the working directory.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

/// Everything needed to reproduce a run. Written to `config.json` in the
/// run directory before training starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub env: String,
    /// Overrides of the environment's own configuration; `null` for defaults.
    pub env_params: serde_json::Value,
    pub seed: u64,
    /// Expert name (`scripted`, `tight`) or path to a JSON motion plan.
    pub expert: Option<String>,
    /// Dataset file for offline runs (or extra demonstrations otherwise).
    pub dataset: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub learner: LearnerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: "point_mass".into(),
            env_params: serde_json::Value::Null,
            seed: 0,
            expert: None,
            dataset: None,
            output_dir: output_root().join("run"),
            learner: LearnerConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.learner.validate()?;
        if self.learner.mode.uses_expert() && self.expert.is_none() {
            return Err(ReqError::Config(format!(
                "mode {:?} needs an expert",
                self.learner.mode
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
