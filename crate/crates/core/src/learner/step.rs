use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Agent, LearnerConfig, ReplayBuffer, Transition};
use crate::diffcore::{Gradients, NumArray, ParamSet};
use crate::error::Result;
use crate::req_math::{
    evaluate_batch, prior_loss, q_loss_from_targets, trust_region_update, ActionBounds,
    PriorLossInput,
};

/// Diagnostics of one learner step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepMetrics {
    pub q_loss: f64,
    pub prior_loss: f64,
    /// Mean temperature over the batch's next states.
    pub mean_eta: f64,
    /// Mean sample KL over the batch's next states.
    pub mean_kl: f64,
    /// Fraction of stored actions passing the advantage filter.
    pub accept_rate: f64,
}

fn apply(params: &mut ParamSet, mut grads: Gradients, lr: f64, clip: Option<f64>) -> Result<()> {
    if let Some(max) = clip {
        grads.clip_global_norm(max);
    }
    params.adam_step(&grads, lr)
}

/// One update on a sampled batch: target evaluation and dual solve, a
/// critic step, a prior step, the multiplier ascent, and the target sync.
pub fn learner_step<R: Rng + ?Sized>(
    agent: &mut Agent,
    buffer: &ReplayBuffer,
    cfg: &LearnerConfig,
    bounds: Option<&ActionBounds>,
    rng: &mut R,
) -> Result<StepMetrics> {
    let batch = buffer.sample(rng, cfg.batch_size)?;
    let metrics = update_on_batch(agent, &batch, cfg, bounds, rng)?;
    agent.steps += 1;
    agent.sync_targets(agent.steps, cfg.target_update_period);
    Ok(metrics)
}

/// The update of [`learner_step`] on a given batch, without the step
/// counter or target sync.
pub fn update_on_batch<R: Rng + ?Sized>(
    agent: &mut Agent,
    batch: &[Transition],
    cfg: &LearnerConfig,
    bounds: Option<&ActionBounds>,
    rng: &mut R,
) -> Result<StepMetrics> {
    let obs_rows: Vec<&[f64]> = batch.iter().map(|t| t.observation.as_slice()).collect();
    let act_rows: Vec<&[f64]> = batch.iter().map(|t| t.action.as_slice()).collect();
    let obs = NumArray::from_rows(&obs_rows)?;
    let actions = NumArray::from_rows(&act_rows)?;
    let has_expert = batch.iter().any(|t| t.expert_action.is_some());
    let expert_actions = if has_expert {
        let rows: Vec<Vec<f64>> = batch
            .iter()
            .map(|t| t.expert_action.clone().unwrap_or_else(|| t.action.clone()))
            .collect();
        Some(NumArray::from_rows(&rows)?)
    } else {
        None
    };

    let mut metrics = StepMetrics::default();
    let (indicators, expert_indicators) = if cfg.behavior_cloning {
        let ones = vec![1.0; batch.len()];
        let expert_ones = batch
            .iter()
            .map(|t| if t.expert_action.is_some() { 1.0 } else { 0.0 })
            .collect();
        (ones, expert_ones)
    } else {
        let eval = evaluate_batch(
            batch,
            &agent.q_target,
            &agent.prior_target,
            &cfg.req,
            cfg.operator,
            bounds,
            rng,
        )?;
        let out = q_loss_from_targets(&agent.q, &obs, &actions, &eval.targets)?;
        apply(
            agent.q.net_mut().params_mut(),
            out.grads,
            cfg.network.q_lr,
            cfg.network.max_grad_norm,
        )?;
        let n = batch.len() as f64;
        metrics.q_loss = out.loss;
        metrics.mean_eta = eval.next_solves.iter().map(|s| s.eta).sum::<f64>() / n;
        metrics.mean_kl = eval.next_solves.iter().map(|s| s.sample_kl).sum::<f64>() / n;
        (eval.indicators(), eval.expert_indicators())
    };
    metrics.accept_rate = indicators.iter().sum::<f64>() / batch.len() as f64;

    let anchor = agent.prior_target.batch(&obs)?;
    let input = PriorLossInput {
        states: &obs,
        actions: &actions,
        indicators: &indicators,
        expert: expert_actions
            .as_ref()
            .map(|e| (e, expert_indicators.as_slice())),
        anchor: &anchor,
    };
    let out = prior_loss(&agent.prior, input, &agent.trust, cfg.expert_term)?;
    apply(
        agent.prior.net_mut().params_mut(),
        out.grads,
        cfg.network.prior_lr,
        cfg.network.max_grad_norm,
    )?;
    agent.trust = trust_region_update(agent.trust, out.kl.mean, out.kl.cov);
    metrics.prior_loss = out.loss;
    Ok(metrics)
}
