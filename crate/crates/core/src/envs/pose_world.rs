use std::sync::Arc;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EnvSpec, Environment, Step};
use crate::error::{ReqError, Result};
use crate::experts::{geodesic_distance, Embodiment, Pose};
use crate::req_math::ActionBounds;
use crate::Rng64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseWorldConfig {
    /// Integration step in seconds.
    pub h: f64,
    pub max_steps: usize,
    /// Positions are drawn from `[-w, w]^3`.
    pub workspace: f64,
    /// Bound on every twist component.
    pub max_twist: f64,
    /// Position and angle tolerance counted as success.
    pub tolerance: f64,
}

impl Default for PoseWorldConfig {
    fn default() -> Self {
        PoseWorldConfig {
            h: 0.02,
            max_steps: 500,
            workspace: 1.0,
            max_twist: 10.0,
            tolerance: 1e-3,
        }
    }
}

/// A free-floating end-effector driven by a twist `[v, omega]` (spatial
/// frame): `p += h v`, `Q <- exp(h omega / 2) Q`, renormalized each step.
///
/// Observation (14): position, quaternion `(w, x, y, z)`, target position,
/// target quaternion. Reaching the target within tolerance pays 1 and
/// terminates.
#[derive(Debug, Clone)]
pub struct PoseWorld {
    cfg: PoseWorldConfig,
    spec: EnvSpec,
    pose: Pose,
    target: Pose,
    steps: usize,
    done: bool,
    success: bool,
}

/// Uniform random rotation (Shoemake's method).
pub(crate) fn random_quaternion<R: Rng + ?Sized>(rng: &mut R) -> [f64; 4] {
    use std::f64::consts::TAU;
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    [
        b * (TAU * u3).cos(),
        a * (TAU * u2).sin(),
        a * (TAU * u2).cos(),
        b * (TAU * u3).sin(),
    ]
}

impl PoseWorld {
    pub fn new(cfg: PoseWorldConfig) -> Self {
        let spec = EnvSpec {
            name: "pose_world".into(),
            obs_dim: 14,
            action_dim: 6,
            action_low: vec![-cfg.max_twist; 6],
            action_high: vec![cfg.max_twist; 6],
            max_steps: cfg.max_steps,
            gamma: 0.99,
        };
        let origin = Pose::from_position([0.0; 3]);
        PoseWorld {
            cfg,
            spec,
            pose: origin,
            target: origin,
            steps: 0,
            done: false,
            success: false,
        }
    }

    pub fn set_state(&mut self, pose: Pose, target: Pose) -> Result<Vec<f64>> {
        pose.check_unit()?;
        target.check_unit()?;
        self.pose = pose;
        self.target = target;
        self.steps = 0;
        self.done = false;
        self.success = false;
        Ok(self.observation())
    }

    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    pub fn target(&self) -> &Pose {
        &self.target
    }

    /// Position error norm and rotation angle to the target.
    pub fn errors(&self) -> (f64, f64) {
        (
            (self.target.position - self.pose.position).norm(),
            geodesic_distance(&self.pose, &self.target),
        )
    }

    fn observation(&self) -> Vec<f64> {
        let mut o = Vec::with_capacity(14);
        o.extend(self.pose.position.iter());
        o.extend(self.pose.quaternion_wxyz());
        o.extend(self.target.position.iter());
        o.extend(self.target.quaternion_wxyz());
        o
    }
}

impl Environment for PoseWorld {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }

    fn reset(&mut self, rng: &mut Rng64) -> Vec<f64> {
        let w = self.cfg.workspace;
        let mut position = || {
            [
                rng.random_range(-w..=w),
                rng.random_range(-w..=w),
                rng.random_range(-w..=w),
            ]
        };
        let (p0, p1) = (position(), position());
        let pose = Pose::new(p0, random_quaternion(rng));
        let target = Pose::new(p1, random_quaternion(rng));
        self.set_state(pose, target).expect("unit quaternions")
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        if self.done {
            return Err(ReqError::EpisodeTerminated);
        }
        let a = self.spec.clip(action)?;
        let h = self.cfg.h;
        self.pose.position += Vector3::new(a[0], a[1], a[2]) * h;
        let spin = UnitQuaternion::from_scaled_axis(Vector3::new(a[3], a[4], a[5]) * h);
        let q: Quaternion<f64> = spin.into_inner() * self.pose.orientation;
        self.pose.orientation = q.normalize();
        self.steps += 1;
        let (ep, eo) = self.errors();
        self.success = ep <= self.cfg.tolerance && eo <= self.cfg.tolerance;
        let terminal = self.success;
        let truncated = !terminal && self.steps >= self.cfg.max_steps;
        self.done = terminal || truncated;
        Ok(Step {
            observation: self.observation(),
            reward: if terminal { 1.0 } else { 0.0 },
            terminal,
            truncated,
        })
    }

    fn succeeded(&self) -> bool {
        self.success
    }

    fn embodiment(&self) -> Option<Arc<dyn Embodiment>> {
        Some(Arc::new(PoseBody {
            max_twist: self.cfg.max_twist,
        }))
    }
}

/// Reads the effector and the `"target"` anchor from a pose-world
/// observation.
#[derive(Debug, Clone, Copy)]
pub struct PoseBody {
    pub max_twist: f64,
}

impl Embodiment for PoseBody {
    fn effector_poses(&self, obs: &[f64]) -> Vec<Pose> {
        vec![Pose::new(
            [obs[0], obs[1], obs[2]],
            [obs[3], obs[4], obs[5], obs[6]],
        )]
    }

    fn anchor(&self, name: &str, obs: &[f64]) -> Option<Pose> {
        (name == "target").then(|| {
            Pose::new(
                [obs[7], obs[8], obs[9]],
                [obs[10], obs[11], obs[12], obs[13]],
            )
        })
    }

    fn write_twist(&self, _effector: usize, twist: &[f64; 6], action: &mut [f64]) {
        action[..6].copy_from_slice(twist);
    }

    fn action_bounds(&self) -> ActionBounds {
        ActionBounds {
            low: vec![-self.max_twist; 6],
            high: vec![self.max_twist; 6],
        }
    }
}
