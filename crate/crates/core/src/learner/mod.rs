//! Replay storage, target networks and the training regimes.

mod agent;
mod config;
mod dataset;
mod replay;
mod step;
mod training;
mod transition;

pub use agent::Agent;
pub use config::{ActMode, LearnerConfig, Mode, NetworkConfig};
pub use dataset::{load_dataset, load_offline_dataset, save_dataset};
pub use replay::ReplayBuffer;
pub use step::{learner_step, update_on_batch, StepMetrics};
pub use training::{
    evaluate_actor, evaluate_policy, rollout_episode, run_training, EvalStats, MetricsRow,
    TrainingInputs, TrainingOutcome,
};
pub use transition::{Source, Transition};
