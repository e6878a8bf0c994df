//! Exact REQ backups on finite MDPs, where every action is "sampled" with
//! its prior probability as base mass.

use super::dual::{softmax_weights_weighted, solve_temperature_weighted};
use super::{Operator, ReqConfig};
use crate::error::{ReqError, Result};

/// Finite MDP given by tables indexed `[state][action]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularModel {
    pub rewards: Vec<Vec<f64>>,
    /// `transitions[s][a][s']`.
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub gamma: f64,
}

impl TabularModel {
    pub fn n_states(&self) -> usize {
        self.rewards.len()
    }

    pub fn n_actions(&self) -> usize {
        self.rewards.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let (s, a) = (self.n_states(), self.n_actions());
        if self.transitions.len() != s {
            return Err(ReqError::shape(
                "TabularModel",
                "transition states",
                s,
                self.transitions.len(),
            ));
        }
        for (row_r, row_p) in self.rewards.iter().zip(&self.transitions) {
            if row_r.len() != a || row_p.len() != a {
                return Err(ReqError::shape(
                    "TabularModel",
                    "actions",
                    a,
                    row_r.len().min(row_p.len()),
                ));
            }
            for p in row_p {
                if p.len() != s {
                    return Err(ReqError::shape("TabularModel", "next states", s, p.len()));
                }
                if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(ReqError::Config("transition row does not sum to 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// State value of the implicit policy at one state, given its Q row and
/// prior probabilities.
pub fn implicit_value(
    q_row: &[f64],
    prior_row: &[f64],
    cfg: &ReqConfig,
    operator: Operator,
) -> f64 {
    match operator {
        Operator::Req => {
            let solve = solve_temperature_weighted(q_row, prior_row, cfg, None);
            softmax_weights_weighted(q_row, prior_row, solve.eta, cfg).value
        }
        Operator::Td0 => q_row.iter().zip(prior_row).map(|(q, p)| q * p).sum(),
    }
}

/// One synchronous backup `Q(s,a) <- r(s,a) + gamma sum_s' P(s'|s,a) V(s')`.
pub fn backup(
    model: &TabularModel,
    q: &[Vec<f64>],
    prior: &[Vec<f64>],
    cfg: &ReqConfig,
    operator: Operator,
) -> Vec<Vec<f64>> {
    let v: Vec<f64> = q
        .iter()
        .zip(prior)
        .map(|(row, p)| implicit_value(row, p, cfg, operator))
        .collect();
    model
        .rewards
        .iter()
        .zip(&model.transitions)
        .map(|(r_row, p_row)| {
            r_row
                .iter()
                .zip(p_row)
                .map(|(r, p)| r + model.gamma * p.iter().zip(&v).map(|(p, v)| p * v).sum::<f64>())
                .collect()
        })
        .collect()
}

/// Iterates [`backup`] from zero until the sup-norm change drops below
/// `tol` or `max_iters` is reached. Returns the table and iteration count.
pub fn iterate(
    model: &TabularModel,
    prior: &[Vec<f64>],
    cfg: &ReqConfig,
    operator: Operator,
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<Vec<f64>>, usize)> {
    model.validate()?;
    let mut q = vec![vec![0.0; model.n_actions()]; model.n_states()];
    for it in 1..=max_iters {
        let next = backup(model, &q, prior, cfg, operator);
        let change = next
            .iter()
            .flatten()
            .zip(q.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        q = next;
        if change <= tol {
            return Ok((q, it));
        }
    }
    Ok((q, max_iters))
}
