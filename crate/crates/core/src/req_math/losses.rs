//! Critic and prior losses for one batch.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dual::{softmax_weights, solve_batch, DualSolveResult};
use super::{QFunction, ReqConfig, TrustRegionState};
use crate::diffcore::{Gradients, NumArray};
use crate::error::{ReqError, Result};
use crate::learner::Transition;
use crate::policy::{
    kl_decoupled, kl_decoupled_grad, log_prob, log_prob_grad, DecoupledKl, GaussianBatch,
    GaussianPolicy,
};

/// Policy-evaluation operator used for bootstrap values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    /// KL-constrained softmax backup over prior samples.
    #[default]
    Req,
    /// Plain expectation under the prior (the CRR-bin ablation).
    Td0,
}

/// How expert actions enter the prior loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExpertTerm {
    /// The expert indicator weights `log pi(expert_action | s)`.
    #[default]
    Separate,
    /// Both indicators weight `log pi(a | s)` of the dataset action.
    Literal,
}

/// Per-dimension box used to clip sampled actions before they reach Q.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ActionBounds {
    pub fn clip(&self, action: &mut [f64]) {
        for ((a, lo), hi) in action.iter_mut().zip(&self.low).zip(&self.high) {
            *a = a.clamp(*lo, *hi);
        }
    }
}

/// `r + gamma * V(s')`, with `V(s')` dropped on termination.
pub fn td_target(reward: f64, terminal: bool, gamma: f64, next_value: f64) -> f64 {
    if terminal {
        reward
    } else {
        reward + gamma * next_value
    }
}

/// `1[Q(s, a) >= V(s)]` as 0.0 or 1.0; ties count as improvement.
pub fn advantage_indicator(q_at_action: f64, value: f64) -> f64 {
    if q_at_action >= value {
        1.0
    } else {
        0.0
    }
}

/// Target-network quantities for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEvaluation {
    pub next_solves: Vec<DualSolveResult>,
    /// `V(s')` per transition.
    pub next_values: Vec<f64>,
    pub solves: Vec<DualSolveResult>,
    /// `V(s)` per transition, used by the advantage indicators.
    pub values: Vec<f64>,
    /// `Q'(s, a)` at the stored action.
    pub q_at_action: Vec<f64>,
    /// `Q'(s, expert_action)` where an expert action was recorded.
    pub q_at_expert: Vec<Option<f64>>,
    pub targets: Vec<f64>,
}

impl BatchEvaluation {
    pub fn indicators(&self) -> Vec<f64> {
        self.q_at_action
            .iter()
            .zip(&self.values)
            .map(|(&q, &v)| advantage_indicator(q, v))
            .collect()
    }

    /// Expert indicators; rows without an expert action get 0.
    pub fn expert_indicators(&self) -> Vec<f64> {
        self.q_at_expert
            .iter()
            .zip(&self.values)
            .map(|(q, &v)| q.map_or(0.0, |q| advantage_indicator(q, v)))
            .collect()
    }
}

/// Observation and action matrices of a batch.
pub(crate) fn stack_batch(batch: &[Transition]) -> Result<(NumArray, NumArray, NumArray)> {
    let obs: Vec<&[f64]> = batch.iter().map(|t| t.observation.as_slice()).collect();
    let act: Vec<&[f64]> = batch.iter().map(|t| t.action.as_slice()).collect();
    let next: Vec<&[f64]> = batch
        .iter()
        .map(|t| t.next_observation.as_slice())
        .collect();
    Ok((
        NumArray::from_rows(&obs)?,
        NumArray::from_rows(&act)?,
        NumArray::from_rows(&next)?,
    ))
}

fn values_for(
    q_sets: &[Vec<f64>],
    cfg: &ReqConfig,
    operator: Operator,
) -> (Vec<DualSolveResult>, Vec<f64>) {
    match operator {
        Operator::Req => {
            let solves = solve_batch(q_sets, cfg);
            let values = q_sets
                .iter()
                .zip(&solves)
                .map(|(q, s)| softmax_weights(q, s.eta, cfg).value)
                .collect();
            (solves, values)
        }
        Operator::Td0 => {
            let solves = vec![
                DualSolveResult {
                    eta: cfg.eta_max,
                    sample_kl: 0.0,
                    active: false,
                };
                q_sets.len()
            ];
            let values = q_sets
                .iter()
                .map(|q| q.iter().map(|v| v / q.len() as f64).sum())
                .collect();
            (solves, values)
        }
    }
}

/// Samples `M` actions from the target prior at every `s'` and `s`, scores
/// them and the stored (and expert) actions with the target critic in one
/// pass, and forms values, TD targets and indicators.
pub fn evaluate_batch<R: Rng + ?Sized>(
    batch: &[Transition],
    q_target: &QFunction,
    prior_target: &GaussianPolicy,
    cfg: &ReqConfig,
    operator: Operator,
    bounds: Option<&ActionBounds>,
    rng: &mut R,
) -> Result<BatchEvaluation> {
    if batch.is_empty() {
        return Err(ReqError::InsufficientData {
            available: 0,
            required: 1,
        });
    }
    let b = batch.len();
    let m = cfg.n_action_samples;
    let a_dim = q_target.action_dim();
    let (obs, _, next) = stack_batch(batch)?;
    let states = NumArray::vstack(&[next, obs.clone()])?;
    let dists = prior_target.batch(&states)?;

    let mut joined_states = Vec::with_capacity(2 * b * m + 2 * b);
    let mut joined_actions = Vec::with_capacity(2 * b * m + 2 * b);
    for r in 0..2 * b {
        let dist = dists.get(r);
        for mut a in dist.sample(rng, m) {
            if let Some(bounds) = bounds {
                bounds.clip(&mut a);
            }
            joined_states.push(states.row(r).to_vec());
            joined_actions.push(a);
        }
    }
    for (i, t) in batch.iter().enumerate() {
        joined_states.push(obs.row(i).to_vec());
        joined_actions.push(t.action.clone());
    }
    let experts: Vec<usize> = (0..b)
        .filter(|&i| batch[i].expert_action.is_some())
        .collect();
    for &i in &experts {
        let a = batch[i].expert_action.as_ref().expect("filtered");
        if a.len() != a_dim {
            return Err(ReqError::shape(
                "evaluate_batch",
                "expert action",
                a_dim,
                a.len(),
            ));
        }
        joined_states.push(obs.row(i).to_vec());
        joined_actions.push(a.clone());
    }
    let q_all = q_target.values(
        &NumArray::from_rows(&joined_states)?,
        &NumArray::from_rows(&joined_actions)?,
    )?;

    let q_sets: Vec<Vec<f64>> = (0..2 * b)
        .map(|r| q_all[r * m..(r + 1) * m].to_vec())
        .collect();
    let (next_solves, next_values) = values_for(&q_sets[..b], cfg, operator);
    let (solves, values) = values_for(&q_sets[b..], cfg, operator);
    let q_at_action = q_all[2 * b * m..2 * b * m + b].to_vec();
    let mut q_at_expert = vec![None; b];
    for (k, &i) in experts.iter().enumerate() {
        q_at_expert[i] = Some(q_all[2 * b * m + b + k]);
    }
    let mut targets = Vec::with_capacity(b);
    for (i, t) in batch.iter().enumerate() {
        let y = td_target(t.reward, t.terminal, cfg.gamma, next_values[i]);
        if !y.is_finite() {
            return Err(ReqError::NonFinite {
                context: "TD target",
                index: i,
            });
        }
        targets.push(y);
    }
    Ok(BatchEvaluation {
        next_solves,
        next_values,
        solves,
        values,
        q_at_action,
        q_at_expert,
        targets,
    })
}

/// Scalar loss with gradients for the trained network.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub grads: Gradients,
}

/// `mean_i (Q(s_i, a_i) - y_i)^2` with the targets held fixed.
pub fn q_loss_from_targets(
    q: &QFunction,
    obs: &NumArray,
    actions: &NumArray,
    targets: &[f64],
) -> Result<LossOutput> {
    if let Some(index) = targets.iter().position(|y| !y.is_finite()) {
        return Err(ReqError::NonFinite {
            context: "TD target",
            index,
        });
    }
    if targets.len() != obs.rows() {
        return Err(ReqError::shape(
            "q_loss",
            "targets",
            obs.rows(),
            targets.len(),
        ));
    }
    let n = targets.len() as f64;
    let (values, cache) = q.values_cached(obs, actions)?;
    let mut loss = 0.0;
    let mut d = Vec::with_capacity(values.len());
    for (v, y) in values.iter().zip(targets) {
        let diff = v - y;
        loss += diff * diff / n;
        d.push(2.0 * diff / n);
    }
    let grads = q.backward(&cache, &d)?;
    Ok(LossOutput { loss, grads })
}

/// Critic loss on a batch: target evaluation followed by the squared TD
/// error. Returns the evaluation so the prior update can reuse it.
#[allow(clippy::too_many_arguments)]
pub fn q_loss<R: Rng + ?Sized>(
    batch: &[Transition],
    q: &QFunction,
    q_target: &QFunction,
    prior_target: &GaussianPolicy,
    cfg: &ReqConfig,
    operator: Operator,
    bounds: Option<&ActionBounds>,
    rng: &mut R,
) -> Result<(LossOutput, BatchEvaluation)> {
    let eval = evaluate_batch(batch, q_target, prior_target, cfg, operator, bounds, rng)?;
    let (obs, actions, _) = stack_batch(batch)?;
    let out = q_loss_from_targets(q, &obs, &actions, &eval.targets)?;
    Ok((out, eval))
}

/// Inputs of the prior loss; all rows aligned with `states`.
#[derive(Debug, Clone, Copy)]
pub struct PriorLossInput<'a> {
    pub states: &'a NumArray,
    pub actions: &'a NumArray,
    pub indicators: &'a [f64],
    /// Expert actions with their indicators (0 where absent).
    pub expert: Option<(&'a NumArray, &'a [f64])>,
    /// Target prior at `states`, the trust-region anchor.
    pub anchor: &'a GaussianBatch,
}

#[derive(Debug, Clone)]
pub struct PriorLossOutput {
    /// Data term plus both multiplier penalties.
    pub loss: f64,
    /// Filtered negative log-likelihood alone.
    pub data_loss: f64,
    /// Batch-mean decoupled KL from the anchor.
    pub kl: DecoupledKl,
    pub grads: Gradients,
}

/// Advantage-filtered negative log-likelihood of the prior plus the
/// Lagrangian trust-region penalties `alpha_mu (KL_mu - eps_mu)` and
/// `alpha_sigma (KL_sigma - eps_sigma)`.
pub fn prior_loss(
    prior: &GaussianPolicy,
    input: PriorLossInput<'_>,
    trust: &TrustRegionState,
    term: ExpertTerm,
) -> Result<PriorLossOutput> {
    let rows = input.states.rows();
    let a_dim = prior.action_dim();
    if input.indicators.len() != rows {
        return Err(ReqError::shape(
            "prior_loss",
            "indicators",
            rows,
            input.indicators.len(),
        ));
    }
    if input.actions.rows() != rows || input.anchor.len() != rows {
        return Err(ReqError::shape(
            "prior_loss",
            "rows",
            rows,
            input.actions.rows(),
        ));
    }
    if let Some((ea, ei)) = input.expert {
        if ea.rows() != rows || ei.len() != rows {
            return Err(ReqError::shape(
                "prior_loss",
                "expert rows",
                rows,
                ea.rows(),
            ));
        }
    }
    let n = rows as f64;
    let (dists, cache) = prior.batch_cached(input.states)?;
    let mut d_mean = vec![0.0; rows * a_dim];
    let mut d_std = vec![0.0; rows * a_dim];
    let mut data_loss = 0.0;
    let mut kl = DecoupledKl::default();

    let mut accumulate = |r: usize,
                          weight: f64,
                          action: &[f64],
                          dist: &crate::policy::GaussianParams|
     -> Result<f64> {
        if weight == 0.0 {
            return Ok(0.0);
        }
        let lp = log_prob(dist, action)?;
        let (gm, gs) = log_prob_grad(dist, action);
        for j in 0..a_dim {
            d_mean[r * a_dim + j] -= weight * gm[j] / n;
            d_std[r * a_dim + j] -= weight * gs[j] / n;
        }
        Ok(-weight * lp / n)
    };

    for r in 0..rows {
        let dist = dists.get(r);
        let expert = input.expert.map(|(ea, ei)| (ea.row(r), ei[r]));
        match (term, expert) {
            (ExpertTerm::Literal, Some((_, ind_e))) => {
                data_loss +=
                    accumulate(r, input.indicators[r] + ind_e, input.actions.row(r), &dist)?;
            }
            (ExpertTerm::Separate, Some((ea, ind_e))) => {
                data_loss += accumulate(r, input.indicators[r], input.actions.row(r), &dist)?;
                data_loss += accumulate(r, ind_e, ea, &dist)?;
            }
            (_, None) => {
                data_loss += accumulate(r, input.indicators[r], input.actions.row(r), &dist)?;
            }
        }
    }

    for r in 0..rows {
        let dist = dists.get(r);
        let old = input.anchor.get(r);
        let k = kl_decoupled(&dist, &old)?;
        kl.mean += k.mean / n;
        kl.cov += k.cov / n;
        let (gm, gs) = kl_decoupled_grad(&dist, &old);
        for j in 0..a_dim {
            d_mean[r * a_dim + j] += trust.alpha_mean * gm[j] / n;
            d_std[r * a_dim + j] += trust.alpha_cov * gs[j] / n;
        }
    }
    let penalty = trust.alpha_mean * (kl.mean - trust.epsilon_mean)
        + trust.alpha_cov * (kl.cov - trust.epsilon_cov);
    let grads = prior.backward(
        &cache,
        &NumArray::matrix(rows, a_dim, d_mean)?,
        &NumArray::matrix(rows, a_dim, d_std)?,
    )?;
    Ok(PriorLossOutput {
        loss: data_loss + penalty,
        data_loss,
        kl,
        grads,
    })
}
