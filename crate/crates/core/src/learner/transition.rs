use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Result};

/// Who chose the action of a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Policy,
    Expert,
}

/// One environment step.
///
/// Serializes to the dataset line format
/// `{"obs","action","reward","next_obs","terminal","source","episode","step"}`
/// plus an optional `expert_action`: the expert's action at `obs`, recorded
/// when an expert was running alongside the episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    #[serde(rename = "obs")]
    pub observation: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    #[serde(rename = "next_obs")]
    pub next_observation: Vec<f64>,
    /// True termination: the next state's value is not bootstrapped.
    pub terminal: bool,
    pub source: Source,
    #[serde(rename = "episode")]
    pub episode_id: u64,
    #[serde(rename = "step")]
    pub step_index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_action: Option<Vec<f64>>,
}

impl Transition {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("transition observation", &self.observation)?;
        ensure_finite("transition action", &self.action)?;
        ensure_finite("transition reward", &[self.reward])?;
        ensure_finite("transition next observation", &self.next_observation)?;
        if let Some(a) = &self.expert_action {
            ensure_finite("transition expert action", a)?;
        }
        Ok(())
    }
}
