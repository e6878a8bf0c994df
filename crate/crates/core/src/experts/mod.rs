//! Suboptimal experts built from waypoint-tracking controllers, the motion
//! sequencer that chains them, and expert/policy intertwining.

mod controller;
mod intertwine;
mod pose;
mod sequencer;

pub use controller::{waypoint_action, GainSet};
pub use intertwine::{IntertwineConfig, Intertwiner};
pub use pose::{geodesic_distance, orientation_error, position_error, Pose};
pub use sequencer::{
    Embodiment, Expert, FrameTarget, JumpFn, Motion, MotionSequence, PrimitiveFn, Registry,
    SequencedExpert,
};
