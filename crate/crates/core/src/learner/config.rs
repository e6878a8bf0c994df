use serde::{Deserialize, Serialize};

use crate::error::{ReqError, Result};
use crate::experts::IntertwineConfig;
use crate::req_math::{ExpertTerm, Operator, ReqConfig, TrustRegionState};

/// Data regime of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Learn from the agent's own interaction.
    #[default]
    Offpolicy,
    /// Learn from a fixed dataset; no interaction.
    Offline,
    /// Whole episodes from the expert mixed with policy episodes.
    Rlfd,
    /// Intertwined expert/policy acting plus expert action relabeling.
    Rlfse,
}

impl Mode {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "offpolicy" => Ok(Mode::Offpolicy),
            "offline" => Ok(Mode::Offline),
            "rlfd" => Ok(Mode::Rlfd),
            "rlfse" => Ok(Mode::Rlfse),
            other => Err(ReqError::Unknown {
                kind: "mode",
                name: other.to_string(),
            }),
        }
    }

    pub fn uses_expert(self) -> bool {
        matches!(self, Mode::Rlfd | Mode::Rlfse)
    }
}

/// How actions are chosen when collecting data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ActMode {
    /// Draw `M` prior samples, weight them by `exp(Q / eta)` and pick one.
    #[default]
    Implicit,
    /// One sample from the prior.
    PriorSample,
    /// The prior mean.
    PriorMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    /// Prior standard deviation at initialization.
    pub init_stddev: f64,
    pub q_lr: f64,
    pub prior_lr: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            hidden: vec![64, 64, 64],
            init_stddev: 0.5,
            q_lr: 3e-4,
            prior_lr: 3e-4,
            max_grad_norm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub mode: Mode,
    pub operator: Operator,
    /// Learner steps between hard target copies.
    pub target_update_period: u64,
    pub batch_size: usize,
    /// Stored for sequence sampling; updates use single transitions.
    pub unroll_length: usize,
    pub total_steps: u64,
    pub replay_capacity: usize,
    /// Transitions collected before the first update.
    pub warmup: usize,
    pub req: ReqConfig,
    pub trust: TrustRegionState,
    pub expert_term: ExpertTerm,
    /// Clone every action (indicators fixed at 1) and skip the critic.
    pub behavior_cloning: bool,
    pub act_mode: ActMode,
    pub intertwine: IntertwineConfig,
    pub network: NetworkConfig,
    /// Learner steps between evaluations; 0 disables periodic evaluation.
    pub eval_period: u64,
    pub eval_episodes: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            mode: Mode::Offpolicy,
            operator: Operator::Req,
            target_update_period: 20,
            batch_size: 128,
            unroll_length: 1,
            total_steps: 10_000,
            replay_capacity: 1_000_000,
            warmup: 256,
            req: ReqConfig::default(),
            trust: TrustRegionState::default(),
            expert_term: ExpertTerm::Separate,
            behavior_cloning: false,
            act_mode: ActMode::Implicit,
            intertwine: IntertwineConfig {
                lambda_psi: 0.25,
                lambda_intertwine: 0.0,
            },
            network: NetworkConfig::default(),
            eval_period: 1000,
            eval_episodes: 20,
        }
    }
}

impl LearnerConfig {
    /// Defaults for a mode: intertwining 0.75/0.5 for RLfSE, 0.25/0 for RLfD.
    pub fn for_mode(mode: Mode) -> Self {
        let intertwine = match mode {
            Mode::Rlfse => IntertwineConfig {
                lambda_psi: 0.75,
                lambda_intertwine: 0.5,
            },
            _ => IntertwineConfig {
                lambda_psi: 0.25,
                lambda_intertwine: 0.0,
            },
        };
        LearnerConfig {
            mode,
            intertwine,
            ..LearnerConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.req.validate()?;
        self.intertwine.validate()?;
        let fail = |m: &str| Err(ReqError::Config(m.to_string()));
        if self.target_update_period < 1 {
            return fail("target_update_period must be >= 1");
        }
        if self.batch_size < 1 || self.unroll_length < 1 {
            return fail("batch_size and unroll_length must be >= 1");
        }
        if self.replay_capacity < self.batch_size {
            return fail("replay_capacity must hold at least one batch");
        }
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            return fail("hidden widths must be positive and non-empty");
        }
        if !(self.network.q_lr > 0.0 && self.network.prior_lr > 0.0) {
            return fail("learning rates must be positive");
        }
        if self.eval_period > 0 && self.eval_episodes == 0 {
            return fail("eval_episodes must be positive when evaluating");
        }
        if self.trust.alpha_mean < 0.0 || self.trust.alpha_cov < 0.0 || !(self.trust.lr > 0.0) {
            return fail("trust-region multipliers must be >= 0 with a positive step size");
        }
        Ok(())
    }
}
