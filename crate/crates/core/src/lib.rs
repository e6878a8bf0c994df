//! Relative entropy Q-learning (REQ): KL-constrained policy iteration with an
//! importance-sampled implicit policy, plus waypoint-controller experts and
//! intertwined exploration, on small deterministic environments.
//!
//! Module map:
//! - [`diffcore`]: arrays, MLPs, Adam, checkpoints
//! - [`policy`]: diagonal Gaussian policy head and its KL decomposition
//! - [`req_math`]: dual temperature solve, importance weights, losses
//! - [`learner`]: replay, target networks, the training regimes
//! - [`experts`]: pose controllers, motion sequencer, intertwining
//! - [`envs`]: chain MDP, point-mass pick-and-place, kinematic pose world
//! - [`harness`]: run configuration, metrics, evaluation, sweeps

pub mod diffcore;
pub mod envs;
pub mod error;
pub mod experts;
pub mod harness;
pub mod learner;
pub mod par;
pub mod policy;
pub mod req_math;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{ReqError, Result};

/// The random number generator used throughout; seedable and portable.
pub type Rng64 = rand_chacha::ChaCha8Rng;

/// Creates the crate RNG from a seed.
pub fn seeded_rng(seed: u64) -> Rng64 {
    use rand::SeedableRng;
    Rng64::seed_from_u64(seed)
}
