use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::controller::{waypoint_action, GainSet};
use super::pose::Pose;
use crate::error::{ReqError, Result};
use crate::req_math::ActionBounds;

/// How a controller reads and drives a particular environment.
pub trait Embodiment: Send + Sync {
    /// Current pose of every controllable end-effector.
    fn effector_poses(&self, obs: &[f64]) -> Vec<Pose>;
    /// Pose of a named reference object (`"object"`, `"goal"`, ...).
    fn anchor(&self, name: &str, obs: &[f64]) -> Option<Pose>;
    /// Writes a twist for one effector into its slots of the action vector.
    fn write_twist(&self, effector: usize, twist: &[f64; 6], action: &mut [f64]);
    fn action_bounds(&self) -> ActionBounds;
}

/// Jump function `J`: state to the next motion index, or `None` to stay.
pub type JumpFn = Arc<dyn Fn(&[f64]) -> Option<usize> + Send + Sync>;
/// Learned or hand-written primitive replacing a motion's action.
pub type PrimitiveFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Named jump predicates and primitives a plan may refer to.
#[derive(Clone, Default)]
pub struct Registry {
    jumps: BTreeMap<String, JumpFn>,
    primitives: BTreeMap<String, PrimitiveFn>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("jumps", &self.jumps.keys().collect::<Vec<_>>())
            .field("primitives", &self.primitives.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Registry {
    pub fn with_jump(mut self, name: &str, f: JumpFn) -> Self {
        self.jumps.insert(name.to_string(), f);
        self
    }

    pub fn with_primitive(mut self, name: &str, f: PrimitiveFn) -> Self {
        self.primitives.insert(name.to_string(), f);
        self
    }

    fn jump(&self, name: &str) -> Result<&JumpFn> {
        self.jumps.get(name).ok_or_else(|| ReqError::Unknown {
            kind: "jump predicate",
            name: name.to_string(),
        })
    }

    fn primitive(&self, name: &str) -> Result<&PrimitiveFn> {
        self.primitives.get(name).ok_or_else(|| ReqError::Unknown {
            kind: "primitive",
            name: name.to_string(),
        })
    }
}

fn identity_quaternion() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

/// Target pose of one end-effector, optionally relative to an anchor (the
/// anchor's position is added; its orientation is ignored).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTarget {
    #[serde(default)]
    pub effector: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<String>,
    pub position: [f64; 3],
    #[serde(default = "identity_quaternion")]
    pub quaternion: [f64; 4],
    pub gains: GainSet,
}

impl FrameTarget {
    fn resolve(&self, embodiment: &dyn Embodiment, obs: &[f64]) -> Result<Pose> {
        let mut pose = Pose::new(self.position, self.quaternion);
        if let Some(name) = &self.anchor {
            let a = embodiment
                .anchor(name, obs)
                .ok_or_else(|| ReqError::Unknown {
                    kind: "anchor",
                    name: name.clone(),
                })?;
            pose.position += a.position;
        }
        Ok(pose)
    }
}

/// One step of a plan: base action, per-effector targets, optional
/// primitive and jump, and a timeout in environment steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    pub base_action: Vec<f64>,
    #[serde(default)]
    pub frames: Vec<FrameTarget>,
    pub timeout: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primitive: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump: Option<String>,
}

/// An ordered list of motions and the position within it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSequence {
    pub motions: Vec<Motion>,
    #[serde(skip)]
    index: usize,
    #[serde(skip)]
    counter: usize,
}

impl MotionSequence {
    pub fn new(motions: Vec<Motion>) -> Result<Self> {
        if motions.is_empty() {
            return Err(ReqError::Config("motion sequence is empty".into()));
        }
        if let Some(i) = motions.iter().position(|m| m.timeout == 0) {
            return Err(ReqError::Config(format!("motion {i} has timeout 0")));
        }
        Ok(MotionSequence {
            motions,
            index: 0,
            counter: 0,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: MotionSequence = serde_json::from_str(text)?;
        MotionSequence::new(raw.motions)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks that every named predicate and primitive resolves.
    pub fn check(&self, registry: &Registry) -> Result<()> {
        for m in &self.motions {
            if let Some(j) = &m.jump {
                registry.jump(j)?;
            }
            if let Some(p) = &m.primitive {
                registry.primitive(p)?;
            }
        }
        Ok(())
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn reset(&mut self) {
        self.index = 0;
        self.counter = 0;
    }

    /// Emits the current motion's action, then advances on timeout
    /// (saturating at the last motion) and finally applies the jump.
    pub fn step(
        &mut self,
        obs: &[f64],
        embodiment: &dyn Embodiment,
        registry: &Registry,
    ) -> Result<Vec<f64>> {
        let motion = &self.motions[self.index];
        let mut action = motion.base_action.clone();
        if !motion.frames.is_empty() {
            let poses = embodiment.effector_poses(obs);
            for frame in &motion.frames {
                let current = poses.get(frame.effector).ok_or_else(|| ReqError::Unknown {
                    kind: "effector",
                    name: frame.effector.to_string(),
                })?;
                let desired = frame.resolve(embodiment, obs)?;
                let twist = waypoint_action(current, &desired, &frame.gains)?;
                embodiment.write_twist(frame.effector, &twist, &mut action);
            }
        }
        if let Some(name) = &motion.primitive {
            action = registry.primitive(name)?(obs);
        }
        embodiment.action_bounds().clip(&mut action);
        let jump = motion.jump.clone();

        self.counter += 1;
        if self.counter >= motion.timeout {
            self.index = (self.index + 1).min(self.motions.len() - 1);
            self.counter = 0;
        }
        if let Some(name) = jump {
            if let Some(next) = registry.jump(&name)?(obs) {
                if next != self.index {
                    self.index = next.min(self.motions.len() - 1);
                    self.counter = 0;
                }
            }
        }
        Ok(action)
    }
}

/// A stateful expert `psi(a | s)`.
pub trait Expert: Send {
    /// Called at the start of each episode.
    fn reset(&mut self);
    fn act(&mut self, obs: &[f64]) -> Result<Vec<f64>>;
}

/// A motion sequence bound to an embodiment and registry.
#[derive(Clone)]
pub struct SequencedExpert {
    pub sequence: MotionSequence,
    pub embodiment: Arc<dyn Embodiment>,
    pub registry: Registry,
}

impl fmt::Debug for SequencedExpert {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SequencedExpert")
            .field("sequence", &self.sequence)
            .field("registry", &self.registry)
            .finish()
    }
}

impl SequencedExpert {
    pub fn new(
        sequence: MotionSequence,
        embodiment: Arc<dyn Embodiment>,
        registry: Registry,
    ) -> Result<Self> {
        sequence.check(&registry)?;
        Ok(SequencedExpert {
            sequence,
            embodiment,
            registry,
        })
    }
}

impl Expert for SequencedExpert {
    fn reset(&mut self) {
        self.sequence.reset();
    }

    fn act(&mut self, obs: &[f64]) -> Result<Vec<f64>> {
        self.sequence
            .step(obs, self.embodiment.as_ref(), &self.registry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A 1-D world: observation `[x, flag]`, action `[v, grip]`.
    struct Line;

    impl Embodiment for Line {
        fn effector_poses(&self, obs: &[f64]) -> Vec<Pose> {
            vec![Pose::from_position([obs[0], 0.0, 0.0])]
        }

        fn anchor(&self, name: &str, _obs: &[f64]) -> Option<Pose> {
            (name == "origin").then(|| Pose::from_position([0.0; 3]))
        }

        fn write_twist(&self, _effector: usize, twist: &[f64; 6], action: &mut [f64]) {
            action[0] = twist[0];
        }

        fn action_bounds(&self) -> ActionBounds {
            ActionBounds {
                low: vec![-1.0, -1.0],
                high: vec![1.0, 1.0],
            }
        }
    }

    fn plain(base: f64, timeout: usize) -> Motion {
        Motion {
            base_action: vec![base, 0.0],
            frames: vec![],
            timeout,
            primitive: None,
            jump: None,
        }
    }

    #[test]
    fn single_motion_repeats_base_action() {
        let mut seq = MotionSequence::new(vec![plain(0.5, 3)]).unwrap();
        for _ in 0..6 {
            assert_eq!(
                seq.step(&[0.0, 0.0], &Line, &Registry::default()).unwrap(),
                vec![0.5, 0.0]
            );
        }
    }

    #[test]
    fn timeouts_advance_and_saturate() {
        let mut seq = MotionSequence::new(vec![plain(0.0, 3), plain(1.0, 2)]).unwrap();
        let trace: Vec<usize> = (0..8)
            .map(|_| {
                let i = seq.index();
                seq.step(&[0.0, 0.0], &Line, &Registry::default()).unwrap();
                i
            })
            .collect();
        assert_eq!(trace, vec![0, 0, 0, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn jump_resets_when_predicate_fires() {
        let registry = Registry::default().with_jump(
            "dropped",
            Arc::new(|obs: &[f64]| (obs[1] == 0.0).then_some(0)),
        );
        let mut second = plain(1.0, 100);
        second.jump = Some("dropped".into());
        let mut seq = MotionSequence::new(vec![plain(0.0, 1), second]).unwrap();
        seq.step(&[0.0, 1.0], &Line, &registry).unwrap();
        assert_eq!(seq.index(), 1);
        seq.step(&[0.0, 1.0], &Line, &registry).unwrap();
        assert_eq!(seq.index(), 1);
        seq.step(&[0.0, 0.0], &Line, &registry).unwrap();
        assert_eq!(seq.index(), 0);
    }

    #[test]
    fn frames_drive_toward_anchor_and_clip() {
        let frame = FrameTarget {
            effector: 0,
            anchor: Some("origin".into()),
            position: [0.2, 0.0, 0.0],
            quaternion: identity_quaternion(),
            gains: GainSet::isotropic(1.0, 1.0).unwrap(),
        };
        let motion = Motion {
            frames: vec![frame],
            ..plain(0.0, 10)
        };
        let mut seq = MotionSequence::new(vec![motion]).unwrap();
        let a = seq.step(&[0.0, 0.0], &Line, &Registry::default()).unwrap();
        assert!((a[0] - 0.2).abs() < 1e-15);
        let a = seq.step(&[5.0, 0.0], &Line, &Registry::default()).unwrap();
        assert_eq!(a[0], -1.0);
    }

    #[test]
    fn primitive_replaces_action() {
        let registry =
            Registry::default().with_primitive("push", Arc::new(|_: &[f64]| vec![0.25, 0.75]));
        let mut m = plain(0.0, 5);
        m.primitive = Some("push".into());
        let mut seq = MotionSequence::new(vec![m]).unwrap();
        assert_eq!(
            seq.step(&[0.0, 0.0], &Line, &registry).unwrap(),
            vec![0.25, 0.75]
        );
    }

    #[test]
    fn unknown_names_rejected() {
        let mut m = plain(0.0, 5);
        m.jump = Some("nope".into());
        let seq = MotionSequence::new(vec![m]).unwrap();
        assert!(matches!(
            seq.check(&Registry::default()),
            Err(ReqError::Unknown { .. })
        ));
        assert!(MotionSequence::new(vec![plain(0.0, 0)]).is_err());
        assert!(MotionSequence::new(vec![]).is_err());
    }

    #[test]
    fn plan_round_trips_through_json() {
        let frame = FrameTarget {
            effector: 0,
            anchor: Some("origin".into()),
            position: [0.1, 0.2, 0.3],
            quaternion: [0.0, 1.0, 0.0, 0.0],
            gains: GainSet::isotropic(1.5, 0.5).unwrap(),
        };
        let mut m = plain(0.0, 4);
        m.frames.push(frame);
        m.jump = Some("dropped".into());
        let seq = MotionSequence::new(vec![m, plain(1.0, 2)]).unwrap();
        let back = MotionSequence::from_json(&seq.to_json().unwrap()).unwrap();
        assert_eq!(back, seq);
    }
}
