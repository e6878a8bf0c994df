use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EnvSpec, Environment, Step};
use crate::error::{ReqError, Result};
use crate::experts::{
    Embodiment, FrameTarget, GainSet, Motion, MotionSequence, Pose, Registry, SequencedExpert,
};
use crate::req_math::ActionBounds;
use crate::Rng64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PointMassTask {
    /// Grasp the object and carry it into the goal disc.
    #[default]
    PickPlace,
    /// Move the agent itself into the goal disc.
    Reach,
}

/// Geometry and timing of the point-mass world. The workspace is
/// `[-1, 1]^2`; spawn boxes are centred squares of the given half-widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PointMassConfig {
    pub task: PointMassTask,
    pub dt: f64,
    pub max_steps: usize,
    pub latch_radius: f64,
    pub goal_radius: f64,
    pub agent_spawn: f64,
    pub object_spawn: f64,
    pub goal_spawn: f64,
}

impl Default for PointMassConfig {
    fn default() -> Self {
        PointMassConfig {
            task: PointMassTask::PickPlace,
            dt: 0.1,
            max_steps: 40,
            latch_radius: 0.1,
            goal_radius: 0.15,
            agent_spawn: 0.3,
            object_spawn: 0.7,
            goal_spawn: 0.7,
        }
    }
}

impl PointMassConfig {
    /// Reach a small goal that may lie anywhere in the workspace.
    pub fn reach() -> Self {
        PointMassConfig {
            task: PointMassTask::Reach,
            goal_radius: 0.1,
            goal_spawn: 1.0,
            ..PointMassConfig::default()
        }
    }
}

/// Velocity-controlled point in the plane with a latching gripper.
///
/// Pick-and-place observation (11): agent `(x, y)`, object `(x, y)`, goal
/// `(x, y)`, grasp flag, object minus agent, goal minus agent. Action (3):
/// velocity `(vx, vy)` in `[-1, 1]` and grip (`> 0` closes the latch).
///
/// Reach observation (6): agent, goal, goal minus agent; action `(vx, vy)`.
///
/// Reward is 1 on success (object held inside the goal disc, or agent
/// inside it), which also terminates the episode.
#[derive(Debug, Clone)]
pub struct PointMassWorld {
    cfg: PointMassConfig,
    spec: EnvSpec,
    agent: [f64; 2],
    object: [f64; 2],
    goal: [f64; 2],
    grasped: bool,
    steps: usize,
    done: bool,
    success: bool,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl PointMassWorld {
    pub fn new(cfg: PointMassConfig) -> Result<Self> {
        if !(cfg.dt > 0.0 && cfg.max_steps > 0 && cfg.latch_radius > 0.0 && cfg.goal_radius > 0.0) {
            return Err(ReqError::Config(
                "point-mass dt, max_steps and radii must be positive".into(),
            ));
        }
        for h in [cfg.agent_spawn, cfg.object_spawn, cfg.goal_spawn] {
            if !(0.0..=1.0).contains(&h) {
                return Err(ReqError::Config(
                    "spawn half-widths must lie in [0, 1]".into(),
                ));
            }
        }
        let (name, obs_dim, action_dim) = match cfg.task {
            PointMassTask::PickPlace => ("point_mass", 11, 3),
            PointMassTask::Reach => ("point_mass_reach", 6, 2),
        };
        let spec = EnvSpec {
            name: name.into(),
            obs_dim,
            action_dim,
            action_low: vec![-1.0; action_dim],
            action_high: vec![1.0; action_dim],
            max_steps: cfg.max_steps,
            gamma: 0.99,
        };
        Ok(PointMassWorld {
            cfg,
            spec,
            agent: [0.0; 2],
            object: [0.0; 2],
            goal: [0.0; 2],
            grasped: false,
            steps: 0,
            done: false,
            success: false,
        })
    }

    pub fn config(&self) -> &PointMassConfig {
        &self.cfg
    }

    /// Places agent, object and goal directly (for tests and fixtures).
    pub fn set_state(
        &mut self,
        agent: [f64; 2],
        object: [f64; 2],
        goal: [f64; 2],
        grasped: bool,
    ) -> Vec<f64> {
        self.agent = agent;
        self.object = object;
        self.goal = goal;
        self.grasped = grasped;
        self.steps = 0;
        self.done = false;
        self.success = false;
        self.observation()
    }

    pub fn object(&self) -> [f64; 2] {
        self.object
    }

    pub fn agent(&self) -> [f64; 2] {
        self.agent
    }

    pub fn grasped(&self) -> bool {
        self.grasped
    }

    fn observation(&self) -> Vec<f64> {
        let [ax, ay] = self.agent;
        let [gx, gy] = self.goal;
        match self.cfg.task {
            PointMassTask::PickPlace => {
                let [ox, oy] = self.object;
                let g = if self.grasped { 1.0 } else { 0.0 };
                vec![
                    ax,
                    ay,
                    ox,
                    oy,
                    gx,
                    gy,
                    g,
                    ox - ax,
                    oy - ay,
                    gx - ax,
                    gy - ay,
                ]
            }
            PointMassTask::Reach => vec![ax, ay, gx, gy, gx - ax, gy - ay],
        }
    }

    fn is_success(&self) -> bool {
        match self.cfg.task {
            PointMassTask::PickPlace => {
                self.grasped && dist(self.object, self.goal) <= self.cfg.goal_radius
            }
            PointMassTask::Reach => dist(self.agent, self.goal) <= self.cfg.goal_radius,
        }
    }

    /// The deliberately weak scripted expert. It waits for the grasp and
    /// retries on a drop like the tight one, but its proportional gain of
    /// 0.8 slows it down near each target so roughly half the episodes run
    /// out of time.
    pub fn scripted_expert() -> MotionSequence {
        two_motion_plan(0.8)
    }

    /// A well-tuned expert: saturating gains, and jumps that wait for the
    /// grasp and retry if the object is lost.
    pub fn tight_expert() -> MotionSequence {
        two_motion_plan(20.0)
    }

    /// Jump predicates available to point-mass plans.
    pub fn registry() -> Registry {
        Registry::default()
            .with_jump(
                "grasped",
                Arc::new(|obs: &[f64]| (obs[6] > 0.5).then_some(1)),
            )
            .with_jump(
                "released",
                Arc::new(|obs: &[f64]| (obs[6] < 0.5).then_some(0)),
            )
    }

    /// Binds a plan to this world's embodiment.
    pub fn expert(plan: MotionSequence) -> Result<SequencedExpert> {
        SequencedExpert::new(plan, Arc::new(PointMassBody), PointMassWorld::registry())
    }
}

fn two_motion_plan(gain: f64) -> MotionSequence {
    let gains = GainSet::isotropic(gain, 1.0).expect("positive gain");
    let frame = |anchor: &str| FrameTarget {
        effector: 0,
        anchor: Some(anchor.to_string()),
        position: [0.0; 3],
        quaternion: [1.0, 0.0, 0.0, 0.0],
        gains,
    };
    let approach = Motion {
        base_action: vec![0.0, 0.0, 1.0],
        frames: vec![frame("object")],
        timeout: 1000,
        primitive: None,
        jump: Some("grasped".into()),
    };
    let carry = Motion {
        base_action: vec![0.0, 0.0, 1.0],
        frames: vec![frame("goal")],
        timeout: 1000,
        primitive: None,
        jump: Some("released".into()),
    };
    MotionSequence::new(vec![approach, carry]).expect("non-empty plan")
}

/// The point-mass agent seen as a planar end-effector at `z = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PointMassBody;

impl Embodiment for PointMassBody {
    fn effector_poses(&self, obs: &[f64]) -> Vec<Pose> {
        vec![Pose::from_position([obs[0], obs[1], 0.0])]
    }

    fn anchor(&self, name: &str, obs: &[f64]) -> Option<Pose> {
        match (name, obs.len()) {
            ("object", 11) => Some(Pose::from_position([obs[2], obs[3], 0.0])),
            ("goal", 11) => Some(Pose::from_position([obs[4], obs[5], 0.0])),
            ("goal", 6) => Some(Pose::from_position([obs[2], obs[3], 0.0])),
            _ => None,
        }
    }

    fn write_twist(&self, _effector: usize, twist: &[f64; 6], action: &mut [f64]) {
        action[0] = twist[0];
        action[1] = twist[1];
    }

    fn action_bounds(&self) -> ActionBounds {
        ActionBounds {
            low: vec![-1.0, -1.0, -1.0],
            high: vec![1.0, 1.0, 1.0],
        }
    }
}

impl Environment for PointMassWorld {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }

    fn reset(&mut self, rng: &mut Rng64) -> Vec<f64> {
        let mut draw = |h: f64| [rng.random_range(-h..=h), rng.random_range(-h..=h)];
        let agent = draw(self.cfg.agent_spawn);
        let object = draw(self.cfg.object_spawn);
        let goal = draw(self.cfg.goal_spawn);
        self.set_state(agent, object, goal, false)
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        if self.done {
            return Err(ReqError::EpisodeTerminated);
        }
        let a = self.spec.clip(action)?;
        for d in 0..2 {
            self.agent[d] = (self.agent[d] + self.cfg.dt * a[d]).clamp(-1.0, 1.0);
        }
        if self.cfg.task == PointMassTask::PickPlace {
            if a[2] > 0.0 {
                if !self.grasped && dist(self.agent, self.object) <= self.cfg.latch_radius {
                    self.grasped = true;
                }
            } else {
                self.grasped = false;
            }
            if self.grasped {
                self.object = self.agent;
            }
        }
        self.steps += 1;
        self.success = self.is_success();
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
        Some(Arc::new(PointMassBody))
    }
}
