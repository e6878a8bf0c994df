use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ReqError, Result};
use crate::learner::Source;

/// Mixing probabilities for expert/policy data collection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntertwineConfig {
    /// Probability of acting with the expert.
    pub lambda_psi: f64,
    /// Probability that an episode switches actor at every step.
    pub lambda_intertwine: f64,
}

impl IntertwineConfig {
    pub fn new(lambda_psi: f64, lambda_intertwine: f64) -> Result<Self> {
        let cfg = IntertwineConfig {
            lambda_psi,
            lambda_intertwine,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_psi", self.lambda_psi),
            ("lambda_intertwine", self.lambda_intertwine),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ReqError::Config(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-episode actor selection. Intertwined episodes draw the actor at
/// every step; other episodes draw it once at reset.
#[derive(Debug, Clone)]
pub struct Intertwiner {
    cfg: IntertwineConfig,
    intertwined: bool,
    episode_actor: Source,
}

impl Intertwiner {
    pub fn new(cfg: IntertwineConfig) -> Self {
        Intertwiner {
            cfg,
            intertwined: false,
            episode_actor: Source::Policy,
        }
    }

    pub fn config(&self) -> &IntertwineConfig {
        &self.cfg
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Source {
        if rng.random_bool(self.cfg.lambda_psi) {
            Source::Expert
        } else {
            Source::Policy
        }
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.intertwined = rng.random_bool(self.cfg.lambda_intertwine);
        self.episode_actor = self.draw(rng);
    }

    pub fn is_intertwined(&self) -> bool {
        self.intertwined
    }

    /// Actor for the next step.
    pub fn choose<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Source {
        if self.intertwined {
            self.draw(rng)
        } else {
            self.episode_actor
        }
    }

    /// Picks the actor and evaluates only its action function.
    pub fn act<R, P, E>(&mut self, rng: &mut R, policy: P, expert: E) -> Result<(Vec<f64>, Source)>
    where
        R: Rng + ?Sized,
        P: FnOnce(&mut R) -> Result<Vec<f64>>,
        E: FnOnce() -> Result<Vec<f64>>,
    {
        match self.choose(rng) {
            Source::Expert => Ok((expert()?, Source::Expert)),
            Source::Policy => Ok((policy(rng)?, Source::Policy)),
        }
    }
}
