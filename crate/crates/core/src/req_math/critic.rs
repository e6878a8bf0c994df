use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{ForwardCache, Gradients, Mlp, MlpSpec, NumArray};
use crate::error::{ReqError, Result};

/// State-action value network `Q(s, a)` over the concatenation `[s, a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QFunction {
    net: Mlp,
    obs_dim: usize,
    action_dim: usize,
}

impl QFunction {
    pub fn init<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let net = Mlp::init(MlpSpec::new(obs_dim + action_dim, hidden, 1), rng, 0.1)?;
        Ok(QFunction {
            net,
            obs_dim,
            action_dim,
        })
    }

    pub fn from_mlp(net: Mlp, obs_dim: usize, action_dim: usize) -> Result<Self> {
        if net.spec().input != obs_dim + action_dim || net.spec().output != 1 {
            return Err(ReqError::shape(
                "QFunction",
                "network input",
                obs_dim + action_dim,
                net.spec().input,
            ));
        }
        Ok(QFunction {
            net,
            obs_dim,
            action_dim,
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Stacks `[obs_i, action_i]` rows.
    pub fn join(&self, obs: &NumArray, actions: &NumArray) -> Result<NumArray> {
        if obs.last_dim() != self.obs_dim {
            return Err(ReqError::shape(
                "QFunction",
                "observation width",
                self.obs_dim,
                obs.last_dim(),
            ));
        }
        if actions.last_dim() != self.action_dim {
            return Err(ReqError::shape(
                "QFunction",
                "action width",
                self.action_dim,
                actions.last_dim(),
            ));
        }
        if obs.rows() != actions.rows() {
            return Err(ReqError::shape(
                "QFunction",
                "rows",
                obs.rows(),
                actions.rows(),
            ));
        }
        let width = self.obs_dim + self.action_dim;
        let mut values = Vec::with_capacity(obs.rows() * width);
        for r in 0..obs.rows() {
            values.extend_from_slice(obs.row(r));
            values.extend_from_slice(actions.row(r));
        }
        NumArray::matrix(obs.rows(), width, values)
    }

    pub fn values(&self, obs: &NumArray, actions: &NumArray) -> Result<Vec<f64>> {
        Ok(self.net.forward(&self.join(obs, actions)?)?.into_values())
    }

    /// Values for pre-joined `[s, a]` rows.
    pub fn values_joined(&self, joined: &NumArray) -> Result<Vec<f64>> {
        Ok(self.net.forward(joined)?.into_values())
    }

    pub fn values_cached(
        &self,
        obs: &NumArray,
        actions: &NumArray,
    ) -> Result<(Vec<f64>, ForwardCache)> {
        let (out, cache) = self.net.forward_cached(&self.join(obs, actions)?)?;
        Ok((out.into_values(), cache))
    }

    /// Parameter gradients given `dL/dQ` per row.
    pub fn backward(&self, cache: &ForwardCache, d_values: &[f64]) -> Result<Gradients> {
        self.net.backward(
            cache,
            &NumArray::matrix(d_values.len(), 1, d_values.to_vec())?,
        )
    }
}
