use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{ActMode, LearnerConfig, NetworkConfig};
use crate::diffcore::{load_params, save_params, NumArray};
use crate::error::{ReqError, Result};
use crate::policy::GaussianPolicy;
use crate::req_math::{
    softmax_weights, solve_temperature, ActionBounds, QFunction, ReqConfig, TrustRegionState,
};

/// Online and target networks plus trust-region multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub q: QFunction,
    pub q_target: QFunction,
    pub prior: GaussianPolicy,
    pub prior_target: GaussianPolicy,
    pub trust: TrustRegionState,
    /// Completed learner steps.
    pub steps: u64,
    /// Hard target copies performed so far.
    pub syncs: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct AgentMeta {
    obs_dim: usize,
    action_dim: usize,
    network: NetworkConfig,
    trust: TrustRegionState,
    steps: u64,
    syncs: u64,
}

impl Agent {
    /// Fresh networks; targets start as exact copies.
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        net: &NetworkConfig,
        trust: TrustRegionState,
        rng: &mut R,
    ) -> Result<Self> {
        let q = QFunction::init(obs_dim, action_dim, &net.hidden, rng)?;
        let prior = GaussianPolicy::init(obs_dim, action_dim, &net.hidden, net.init_stddev, rng)?;
        Ok(Agent {
            q_target: q.clone(),
            prior_target: prior.clone(),
            q,
            prior,
            trust,
            steps: 0,
            syncs: 0,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.prior.obs_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.prior.action_dim()
    }

    /// Copies online parameters into the targets when `step` is a positive
    /// multiple of `period`. Returns whether a copy happened.
    pub fn sync_targets(&mut self, step: u64, period: u64) -> bool {
        if step == 0 || period == 0 || !step.is_multiple_of(period) {
            return false;
        }
        self.q_target
            .net_mut()
            .params_mut()
            .copy_values_from(self.q.net().params());
        self.prior_target
            .net_mut()
            .params_mut()
            .copy_values_from(self.prior.net().params());
        self.syncs += 1;
        true
    }

    /// Chooses an action at `obs`.
    pub fn act<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        mode: ActMode,
        req: &ReqConfig,
        bounds: &ActionBounds,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let dist = self.prior.distribution(obs)?;
        let mut action = match mode {
            ActMode::PriorMean => dist.mean.clone(),
            ActMode::PriorSample => dist.sample(rng, 1).remove(0),
            ActMode::Implicit => {
                let m = req.n_action_samples;
                let mut samples = dist.sample(rng, m);
                for a in &mut samples {
                    bounds.clip(a);
                }
                let states = NumArray::matrix(m, obs.len(), obs.repeat(m))?;
                let q = self.q.values(&states, &NumArray::from_rows(&samples)?)?;
                let solve = solve_temperature(&q, req);
                let w = softmax_weights(&q, solve.eta, req);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = m - 1;
                for (j, wj) in w.weights.iter().enumerate() {
                    acc += wj;
                    if u < acc {
                        pick = j;
                        break;
                    }
                }
                samples.swap_remove(pick)
            }
        };
        bounds.clip(&mut action);
        Ok(action)
    }

    /// Writes `agent.json`, `q.json`, `q_target.json`, `prior.json` and
    /// `prior_target.json` into `dir`.
    pub fn save(&self, dir: &Path, cfg: &LearnerConfig) -> Result<()> {
        fs::create_dir_all(dir)?;
        let meta = AgentMeta {
            obs_dim: self.obs_dim(),
            action_dim: self.action_dim(),
            network: cfg.network.clone(),
            trust: self.trust,
            steps: self.steps,
            syncs: self.syncs,
        };
        fs::write(dir.join("agent.json"), serde_json::to_string_pretty(&meta)?)?;
        save_params(&dir.join("q.json"), self.q.net().params())?;
        save_params(&dir.join("q_target.json"), self.q_target.net().params())?;
        save_params(&dir.join("prior.json"), self.prior.net().params())?;
        save_params(
            &dir.join("prior_target.json"),
            self.prior_target.net().params(),
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: AgentMeta = serde_json::from_str(&fs::read_to_string(dir.join("agent.json"))?)?;
        let mut rng = crate::seeded_rng(0);
        let mut agent = Agent::new(
            meta.obs_dim,
            meta.action_dim,
            &meta.network,
            meta.trust,
            &mut rng,
        )?;
        agent
            .q
            .net_mut()
            .params_mut()
            .load_map(&load_params(&dir.join("q.json"))?)?;
        agent
            .q_target
            .net_mut()
            .params_mut()
            .load_map(&load_params(&dir.join("q_target.json"))?)?;
        agent
            .prior
            .net_mut()
            .params_mut()
            .load_map(&load_params(&dir.join("prior.json"))?)?;
        agent
            .prior_target
            .net_mut()
            .params_mut()
            .load_map(&load_params(&dir.join("prior_target.json"))?)?;
        agent.steps = meta.steps;
        agent.syncs = meta.syncs;
        Ok(agent)
    }

    /// Checks the agent against environment dimensions.
    pub fn check_dims(&self, obs_dim: usize, action_dim: usize) -> Result<()> {
        if self.obs_dim() != obs_dim {
            return Err(ReqError::shape(
                "checkpoint",
                "observation width",
                obs_dim,
                self.obs_dim(),
            ));
        }
        if self.action_dim() != action_dim {
            return Err(ReqError::shape(
                "checkpoint",
                "action width",
                action_dim,
                self.action_dim(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent() -> Agent {
        let net = NetworkConfig {
            hidden: vec![8, 8],
            ..NetworkConfig::default()
        };
        Agent::new(
            3,
            2,
            &net,
            TrustRegionState::default(),
            &mut crate::seeded_rng(1),
        )
        .unwrap()
    }

    fn perturb(a: &mut Agent) {
        a.q.net_mut().params_mut().perturb(0, 0.5);
        a.prior.net_mut().params_mut().perturb(3, -0.25);
    }

    #[test]
    fn sync_happens_only_at_multiples() {
        let mut a = agent();
        perturb(&mut a);
        assert!(!a.sync_targets(19, 20));
        assert_ne!(a.q_target, a.q);
        assert!(a.sync_targets(20, 20));
        assert_eq!(
            a.q_target.net().params().flatten(),
            a.q.net().params().flatten()
        );
        assert_eq!(
            a.prior_target.net().params().flatten(),
            a.prior.net().params().flatten()
        );
    }

    #[test]
    fn three_periods_three_copies() {
        let mut a = agent();
        for step in 1..=60 {
            a.sync_targets(step, 20);
        }
        assert_eq!(a.syncs, 3);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut a = agent();
        perturb(&mut a);
        a.steps = 17;
        let dir = tempfile::tempdir().unwrap();
        let cfg = LearnerConfig {
            network: NetworkConfig {
                hidden: vec![8, 8],
                ..NetworkConfig::default()
            },
            ..LearnerConfig::default()
        };
        a.save(dir.path(), &cfg).unwrap();
        let b = Agent::load(dir.path()).unwrap();
        assert_eq!(b.q.net().params().flatten(), a.q.net().params().flatten());
        assert_eq!(
            b.prior.net().params().flatten(),
            a.prior.net().params().flatten()
        );
        assert_eq!(b.steps, 17);
        assert!(b.check_dims(3, 2).is_ok());
        assert!(b.check_dims(4, 2).is_err());
    }

    #[test]
    fn actions_respect_bounds_and_seed() {
        let a = agent();
        let bounds = ActionBounds {
            low: vec![-0.1, -0.1],
            high: vec![0.1, 0.1],
        };
        for mode in [ActMode::Implicit, ActMode::PriorSample, ActMode::PriorMean] {
            let x = a
                .act(
                    &[0.1, 0.2, 0.3],
                    mode,
                    &ReqConfig::default(),
                    &bounds,
                    &mut crate::seeded_rng(3),
                )
                .unwrap();
            let y = a
                .act(
                    &[0.1, 0.2, 0.3],
                    mode,
                    &ReqConfig::default(),
                    &bounds,
                    &mut crate::seeded_rng(3),
                )
                .unwrap();
            assert_eq!(x, y);
            assert!(x.iter().all(|v| v.abs() <= 0.1));
        }
    }
}
