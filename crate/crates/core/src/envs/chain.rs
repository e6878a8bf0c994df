use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{EnvSpec, Environment, Step};
use crate::error::{ReqError, Result};
use crate::req_math::tabular::TabularModel;
use crate::Rng64;

/// Finite MDP with tabular rewards and transitions, started in state 0.
/// As an [`Environment`] it observes one-hot states and maps the scalar
/// action in `[-1, 1]` onto equal-width action bins.
#[derive(Debug, Clone)]
pub struct ChainMdp {
    model: TabularModel,
    spec: EnvSpec,
    state: usize,
    steps: usize,
    done: bool,
    rng: Rng64,
}

impl ChainMdp {
    pub fn new(model: TabularModel, max_steps: usize) -> Result<Self> {
        model.validate()?;
        if model.n_states() == 0 || model.n_actions() == 0 {
            return Err(ReqError::Config(
                "chain MDP needs states and actions".into(),
            ));
        }
        let spec = EnvSpec {
            name: "chain".into(),
            obs_dim: model.n_states(),
            action_dim: 1,
            action_low: vec![-1.0],
            action_high: vec![1.0],
            max_steps,
            gamma: model.gamma,
        };
        Ok(ChainMdp {
            model,
            spec,
            state: 0,
            steps: 0,
            done: false,
            rng: crate::seeded_rng(0),
        })
    }

    /// Three states in a row; action 1 moves right, action 0 stays. Staying
    /// at the right end pays 1, moving there pays 0.5.
    pub fn three_state() -> Self {
        let mut transitions = vec![vec![vec![0.0; 3]; 2]; 3];
        for (s, row) in transitions.iter_mut().enumerate() {
            row[0][s] = 1.0;
            row[1][(s + 1).min(2)] = 1.0;
        }
        let model = TabularModel {
            rewards: vec![vec![0.0, 0.1], vec![0.2, 0.0], vec![1.0, 0.5]],
            transitions,
            gamma: 0.9,
        };
        ChainMdp::new(model, 20).expect("valid by construction")
    }

    pub fn model(&self) -> &TabularModel {
        &self.model
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Bin of a continuous action.
    pub fn action_index(&self, action: f64) -> usize {
        let n = self.model.n_actions();
        let u = (action.clamp(-1.0, 1.0) + 1.0) / 2.0;
        ((u * n as f64) as usize).min(n - 1)
    }

    /// Optimal action values by value iteration to a sup-norm change of
    /// `1e-12`, with the greedy policy.
    pub fn exact_policy_iteration(&self) -> (Vec<Vec<f64>>, Vec<usize>) {
        let m = &self.model;
        let (ns, na) = (m.n_states(), m.n_actions());
        let mut q = vec![vec![0.0; na]; ns];
        loop {
            let v: Vec<f64> = q
                .iter()
                .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let next: Vec<Vec<f64>> = (0..ns)
                .map(|s| {
                    (0..na)
                        .map(|a| {
                            m.rewards[s][a]
                                + m.gamma
                                    * m.transitions[s][a]
                                        .iter()
                                        .zip(&v)
                                        .map(|(p, v)| p * v)
                                        .sum::<f64>()
                        })
                        .collect()
                })
                .collect();
            let change = next
                .iter()
                .flatten()
                .zip(q.iter().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            q = next;
            if change <= 1e-12 {
                break;
            }
        }
        let policy = q
            .iter()
            .map(|r| (0..na).fold(0, |best, a| if r[a] > r[best] { a } else { best }))
            .collect();
        (q, policy)
    }

    /// Action values of a stochastic policy `pi[s][a]`, solving the linear
    /// Bellman system `(I - gamma P_pi) v = r_pi` directly.
    pub fn policy_evaluation(&self, pi: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let m = &self.model;
        let (ns, na) = (m.n_states(), m.n_actions());
        if pi.len() != ns || pi.iter().any(|r| r.len() != na) {
            return Err(ReqError::shape(
                "policy_evaluation",
                "policy table",
                ns,
                pi.len(),
            ));
        }
        let mut a_mat = DMatrix::<f64>::identity(ns, ns);
        let mut b = DVector::<f64>::zeros(ns);
        for s in 0..ns {
            for a in 0..na {
                b[s] += pi[s][a] * m.rewards[s][a];
                for t in 0..ns {
                    a_mat[(s, t)] -= m.gamma * pi[s][a] * m.transitions[s][a][t];
                }
            }
        }
        let v = a_mat
            .lu()
            .solve(&b)
            .ok_or_else(|| ReqError::Config("singular Bellman system".into()))?;
        Ok((0..ns)
            .map(|s| {
                (0..na)
                    .map(|a| {
                        m.rewards[s][a]
                            + m.gamma * (0..ns).map(|t| m.transitions[s][a][t] * v[t]).sum::<f64>()
                    })
                    .collect()
            })
            .collect())
    }

    fn observation(&self) -> Vec<f64> {
        let mut o = vec![0.0; self.model.n_states()];
        o[self.state] = 1.0;
        o
    }

    /// Steps with a discrete action index.
    pub fn step_discrete(&mut self, action: usize) -> Result<Step> {
        if self.done {
            return Err(ReqError::EpisodeTerminated);
        }
        if action >= self.model.n_actions() {
            return Err(ReqError::shape(
                "chain step",
                "action index",
                self.model.n_actions(),
                action,
            ));
        }
        let reward = self.model.rewards[self.state][action];
        let probs = &self.model.transitions[self.state][action];
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        let mut next = probs.len() - 1;
        for (t, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                next = t;
                break;
            }
        }
        self.state = next;
        self.steps += 1;
        let truncated = self.steps >= self.spec.max_steps;
        self.done = truncated;
        Ok(Step {
            observation: self.observation(),
            reward,
            terminal: false,
            truncated,
        })
    }
}

impl Environment for ChainMdp {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }

    fn reset(&mut self, rng: &mut Rng64) -> Vec<f64> {
        use rand::SeedableRng;
        self.rng = Rng64::seed_from_u64(rng.random());
        self.state = 0;
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        let a = self.spec.clip(action)?;
        self.step_discrete(self.action_index(a[0]))
    }

    fn succeeded(&self) -> bool {
        false
    }
}
