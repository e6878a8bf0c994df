//! The REQ update rules: per-state dual temperature, self-normalized
//! importance weights, TD targets, the critic loss, the advantage-filtered
//! prior loss and its trust-region multipliers.

mod critic;
mod dual;
mod losses;
pub mod tabular;
mod trust_region;

use serde::{Deserialize, Serialize};

pub use critic::QFunction;
pub use dual::{
    dual_value, dual_value_weighted, sample_kl, softmax_weights, softmax_weights_weighted,
    solve_batch, solve_temperature, solve_temperature_weighted, AdvantageWeights, DualSolveResult,
    TD0_EPSILON,
};
pub use losses::{
    advantage_indicator, evaluate_batch, prior_loss, q_loss, q_loss_from_targets, td_target,
    ActionBounds, BatchEvaluation, ExpertTerm, LossOutput, Operator, PriorLossInput,
    PriorLossOutput,
};
pub use trust_region::{trust_region_update, TrustRegionState};

use crate::error::{ReqError, Result};

/// How the temperature search is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EtaInit {
    /// Standard deviation of each state's own Q samples.
    #[default]
    PerState,
    /// Mean over the batch of the per-state standard deviations.
    BatchMean,
}

/// Where the KL budget is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintScope {
    #[default]
    PerState,
    /// One shared temperature; the batch-mean KL meets the budget.
    BatchAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReqConfig {
    /// KL budget in nats.
    pub epsilon: f64,
    /// Prior samples per state.
    pub n_action_samples: usize,
    /// Inner iterations of the temperature solve.
    pub dual_steps: usize,
    pub eta_min: f64,
    pub eta_max: f64,
    pub gamma: f64,
    pub eta_init: EtaInit,
    pub constraint: ConstraintScope,
}

impl Default for ReqConfig {
    fn default() -> Self {
        ReqConfig {
            epsilon: 0.75,
            n_action_samples: 20,
            dual_steps: 20,
            eta_min: 1e-6,
            eta_max: 1e6,
            gamma: 0.99,
            eta_init: EtaInit::PerState,
            constraint: ConstraintScope::PerState,
        }
    }
}

impl ReqConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(ReqError::Config(m.to_string()));
        if !(self.epsilon >= 0.0) {
            return fail("epsilon must be >= 0");
        }
        if self.n_action_samples < 2 {
            return fail("n_action_samples must be >= 2");
        }
        if !(self.eta_min > 0.0 && self.eta_min < self.eta_max) {
            return fail("need 0 < eta_min < eta_max");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return fail("gamma must lie in [0, 1)");
        }
        Ok(())
    }

    /// Temperature reported when all samples have the same value.
    pub fn default_eta(&self) -> f64 {
        (self.eta_min * self.eta_max).sqrt()
    }
}
