//! Desk-scale environments with exact or scripted references.

mod chain;
mod point_mass;
mod pose_world;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use chain::ChainMdp;
pub use point_mass::{PointMassBody, PointMassConfig, PointMassTask, PointMassWorld};
pub use pose_world::{PoseWorld, PoseWorldConfig};

use crate::error::{ReqError, Result};
use crate::experts::Embodiment;
use crate::req_math::ActionBounds;
use crate::Rng64;

/// Static description of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub max_steps: usize,
    /// Suggested discount.
    pub gamma: f64,
}

impl EnvSpec {
    pub fn bounds(&self) -> ActionBounds {
        ActionBounds {
            low: self.action_low.clone(),
            high: self.action_high.clone(),
        }
    }

    /// Copy of `action` clipped to the bounds; errors on a wrong length or
    /// non-finite entries.
    pub fn clip(&self, action: &[f64]) -> Result<Vec<f64>> {
        if action.len() != self.action_dim {
            return Err(ReqError::shape(
                "env step",
                "action",
                self.action_dim,
                action.len(),
            ));
        }
        crate::error::ensure_finite("action", action)?;
        let mut a = action.to_vec();
        self.bounds().clip(&mut a);
        Ok(a)
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// The episode reached an absorbing state.
    pub terminal: bool,
    /// The episode hit its step cap without terminating.
    pub truncated: bool,
}

impl Step {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

pub trait Environment: Send + Sync {
    fn spec(&self) -> &EnvSpec;
    /// An independent copy in the same state.
    fn clone_box(&self) -> Box<dyn Environment>;
    /// Starts a new episode drawn from the initial-state distribution.
    fn reset(&mut self, rng: &mut Rng64) -> Vec<f64>;
    /// Advances one step; actions outside the bounds are clipped.
    fn step(&mut self, action: &[f64]) -> Result<Step>;
    /// Whether the current (or just finished) episode succeeded.
    fn succeeded(&self) -> bool;
    /// Hooks for waypoint controllers, where the environment supports them.
    fn embodiment(&self) -> Option<Arc<dyn Embodiment>> {
        None
    }
}

/// Environment names accepted by [`make_env`].
pub const ENV_NAMES: [&str; 4] = ["chain", "point_mass", "point_mass_reach", "pose_world"];

/// Builds an environment by name. `params` holds optional overrides of the
/// environment's configuration fields (`null` for defaults).
pub fn make_env(name: &str, params: &serde_json::Value) -> Result<Box<dyn Environment>> {
    fn parse<T: serde::de::DeserializeOwned + Default>(params: &serde_json::Value) -> Result<T> {
        if params.is_null() {
            Ok(T::default())
        } else {
            Ok(serde_json::from_value(params.clone())?)
        }
    }
    match name {
        "chain" => Ok(Box::new(ChainMdp::three_state())),
        "point_mass" => {
            let cfg: PointMassConfig = parse(params)?;
            Ok(Box::new(PointMassWorld::new(PointMassConfig {
                task: PointMassTask::PickPlace,
                ..cfg
            })?))
        }
        "point_mass_reach" => {
            // Overrides apply on top of the reach defaults, not the pick-place ones.
            let mut merged = serde_json::to_value(PointMassConfig::reach())?;
            if let (Some(base), Some(over)) = (merged.as_object_mut(), params.as_object()) {
                base.extend(over.clone());
            } else if !params.is_null() {
                return Err(ReqError::Config(
                    "point_mass_reach parameters must be a JSON object".into(),
                ));
            }
            let cfg: PointMassConfig = serde_json::from_value(merged)?;
            Ok(Box::new(PointMassWorld::new(PointMassConfig {
                task: PointMassTask::Reach,
                ..cfg
            })?))
        }
        "pose_world" => Ok(Box::new(PoseWorld::new(parse(params)?))),
        other => Err(ReqError::Unknown {
            kind: "environment",
            name: other.to_string(),
        }),
    }
}
