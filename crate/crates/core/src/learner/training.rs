use serde::{Deserialize, Serialize};

use super::{
    learner_step, Agent, LearnerConfig, Mode, ReplayBuffer, Source, StepMetrics, Transition,
};
use crate::envs::Environment;
use crate::error::{ReqError, Result};
use crate::experts::{Expert, Intertwiner};
use crate::par;
use crate::policy::GaussianPolicy;
use crate::{seeded_rng, Rng64};

/// Mean return and success over evaluation episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub mean_return: f64,
    pub success_rate: f64,
}

/// Runs `episodes` episodes with a fresh actor from `make_actor` each.
/// Episode `i` resets from seed `seed + i`, so results do not depend on
/// scheduling.
pub fn evaluate_actor<F, A>(
    env: &dyn Environment,
    episodes: usize,
    seed: u64,
    make_actor: F,
) -> Result<EvalStats>
where
    F: Fn() -> Result<A> + Sync,
    A: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let results = par::map_range(episodes, |i| -> Result<(f64, bool)> {
        let mut env = env.clone_box();
        let mut actor = make_actor()?;
        let mut rng = seeded_rng(seed.wrapping_add(i as u64));
        let mut obs = env.reset(&mut rng);
        let mut ret = 0.0;
        loop {
            let step = env.step(&actor(&obs)?)?;
            ret += step.reward;
            let done = step.done();
            obs = step.observation;
            if done {
                return Ok((ret, env.succeeded()));
            }
        }
    });
    let mut total = 0.0;
    let mut wins = 0usize;
    for r in results {
        let (ret, ok) = r?;
        total += ret;
        wins += usize::from(ok);
    }
    let n = episodes.max(1) as f64;
    Ok(EvalStats {
        mean_return: total / n,
        success_rate: wins as f64 / n,
    })
}

/// Evaluates the prior, acting with its mean.
pub fn evaluate_policy(
    prior: &GaussianPolicy,
    env: &dyn Environment,
    episodes: usize,
    seed: u64,
) -> Result<EvalStats> {
    let spec = env.spec();
    if prior.obs_dim() != spec.obs_dim {
        return Err(ReqError::shape(
            "evaluate",
            "observation",
            spec.obs_dim,
            prior.obs_dim(),
        ));
    }
    if prior.action_dim() != spec.action_dim {
        return Err(ReqError::shape(
            "evaluate",
            "action",
            spec.action_dim,
            prior.action_dim(),
        ));
    }
    evaluate_actor(env, episodes, seed, || {
        Ok(|obs: &[f64]| Ok(prior.distribution(obs)?.mean))
    })
}

/// One metrics line, keyed by learner step. Loss columns are averages over
/// the learner steps since the previous line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub episodic_return: f64,
    pub success_rate: f64,
    pub q_loss: f64,
    pub prior_loss: f64,
    pub mean_eta: f64,
    pub mean_kl: f64,
    pub accept_rate: f64,
}

/// What a run may use. Which fields are required depends on the mode.
#[derive(Default)]
pub struct TrainingInputs {
    /// Environment for data collection (forbidden offline).
    pub env: Option<Box<dyn Environment>>,
    /// Environment for evaluation; defaults to a copy of `env`.
    pub eval_env: Option<Box<dyn Environment>>,
    /// Initial buffer contents (required offline).
    pub dataset: Option<ReplayBuffer>,
    pub expert: Option<Box<dyn Expert>>,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub agent: Agent,
    pub metrics: Vec<MetricsRow>,
    /// Environment steps taken for data collection.
    pub env_steps: u64,
    /// Of which chosen by the expert.
    pub expert_steps: u64,
    pub episodes: u64,
    /// Per collected episode, the actor sources seen in it.
    pub episode_sources: Vec<(bool, bool)>,
}

#[derive(Default)]
struct Accumulator {
    sum: StepMetrics,
    n: u64,
}

impl Accumulator {
    fn add(&mut self, m: &StepMetrics) {
        self.sum.q_loss += m.q_loss;
        self.sum.prior_loss += m.prior_loss;
        self.sum.mean_eta += m.mean_eta;
        self.sum.mean_kl += m.mean_kl;
        self.sum.accept_rate += m.accept_rate;
        self.n += 1;
    }

    fn take(&mut self) -> StepMetrics {
        let n = self.n.max(1) as f64;
        let s = std::mem::take(&mut self.sum);
        self.n = 0;
        StepMetrics {
            q_loss: s.q_loss / n,
            prior_loss: s.prior_loss / n,
            mean_eta: s.mean_eta / n,
            mean_kl: s.mean_kl / n,
            accept_rate: s.accept_rate / n,
        }
    }
}

struct Collector {
    env: Box<dyn Environment>,
    expert: Option<Box<dyn Expert>>,
    intertwiner: Intertwiner,
    obs: Vec<f64>,
    needs_reset: bool,
    episode: u64,
    step_in_episode: u64,
    sources: (bool, bool),
}

/// Trains an agent. Acting and learning alternate one environment step to
/// one learner step once `warmup` transitions are stored. `on_row` sees
/// each metrics row as it is produced.
pub fn run_training(
    inputs: TrainingInputs,
    cfg: &LearnerConfig,
    seed: u64,
    on_row: &mut dyn FnMut(&MetricsRow),
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    let TrainingInputs {
        env,
        eval_env,
        dataset,
        expert,
    } = inputs;
    match cfg.mode {
        Mode::Offline => {
            if env.is_some() {
                return Err(ReqError::Config(
                    "offline mode forbids an interaction environment".into(),
                ));
            }
            if dataset.as_ref().is_none_or(|d| d.is_empty()) {
                return Err(ReqError::Config(
                    "offline mode needs a non-empty dataset".into(),
                ));
            }
        }
        Mode::Offpolicy | Mode::Rlfd | Mode::Rlfse => {
            if env.is_none() {
                return Err(ReqError::Config(format!(
                    "{:?} mode needs an environment",
                    cfg.mode
                )));
            }
        }
    }
    if cfg.mode.uses_expert() && expert.is_none() {
        return Err(ReqError::Config(format!(
            "{:?} mode needs an expert",
            cfg.mode
        )));
    }
    if !cfg.mode.uses_expert() && expert.is_some() {
        return Err(ReqError::Config(format!(
            "{:?} mode does not use an expert",
            cfg.mode
        )));
    }
    let eval_env = eval_env.or_else(|| env.as_ref().map(|e| e.clone_box()));
    if cfg.eval_period > 0 && eval_env.is_none() {
        return Err(ReqError::Config(
            "periodic evaluation needs an environment".into(),
        ));
    }
    let reference = env.as_ref().or(eval_env.as_ref());
    let (obs_dim, action_dim) = match (reference, &dataset) {
        (Some(e), _) => (e.spec().obs_dim, e.spec().action_dim),
        (None, Some(d)) if !d.is_empty() => (d.get(0).observation.len(), d.get(0).action.len()),
        _ => {
            return Err(ReqError::Config(
                "cannot infer observation and action sizes".into(),
            ))
        }
    };
    if let Some(d) = &dataset {
        for t in d.iter() {
            if t.observation.len() != obs_dim || t.action.len() != action_dim {
                return Err(ReqError::shape(
                    "dataset",
                    "transition width",
                    obs_dim,
                    t.observation.len(),
                ));
            }
        }
    }
    let bounds = reference.map(|e| e.spec().bounds());

    let mut rng: Rng64 = seeded_rng(seed);
    let mut agent = Agent::new(obs_dim, action_dim, &cfg.network, cfg.trust, &mut rng)?;
    let mut buffer = match dataset {
        Some(d) if cfg.mode == Mode::Offline => d,
        Some(d) => {
            let mut b = ReplayBuffer::new(cfg.replay_capacity);
            for t in d.iter() {
                b.push(t.clone());
            }
            b
        }
        None => ReplayBuffer::new(cfg.replay_capacity),
    };
    let mut collector = env.map(|env| Collector {
        env,
        expert,
        intertwiner: Intertwiner::new(cfg.intertwine),
        obs: Vec::new(),
        needs_reset: true,
        episode: 0,
        step_in_episode: 0,
        sources: (false, false),
    });

    let eval_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
    let mut outcome_rows = Vec::new();
    let mut acc = Accumulator::default();
    let (mut env_steps, mut expert_steps) = (0u64, 0u64);
    let mut episode_sources = Vec::new();
    let warmup = cfg.warmup.max(1);

    while agent.steps < cfg.total_steps {
        if let Some(c) = collector.as_mut() {
            let source = collect_step(c, &agent, cfg, &mut buffer, &mut rng, &mut episode_sources)?;
            env_steps += 1;
            expert_steps += u64::from(source == Source::Expert);
        }
        if buffer.len() < warmup {
            continue;
        }
        let m = learner_step(&mut agent, &buffer, cfg, bounds.as_ref(), &mut rng)?;
        acc.add(&m);
        let due = cfg.eval_period > 0
            && (agent.steps % cfg.eval_period == 0 || agent.steps == cfg.total_steps);
        if due {
            let env = eval_env.as_deref().expect("checked at startup");
            let stats = evaluate_policy(&agent.prior, env, cfg.eval_episodes, eval_seed)?;
            let m = acc.take();
            let row = MetricsRow {
                step: agent.steps,
                episodic_return: stats.mean_return,
                success_rate: stats.success_rate,
                q_loss: m.q_loss,
                prior_loss: m.prior_loss,
                mean_eta: m.mean_eta,
                mean_kl: m.mean_kl,
                accept_rate: m.accept_rate,
            };
            on_row(&row);
            outcome_rows.push(row);
        }
    }
    let episodes = collector.as_ref().map_or(0, |c| c.episode);
    Ok(TrainingOutcome {
        agent,
        metrics: outcome_rows,
        env_steps,
        expert_steps,
        episodes,
        episode_sources,
    })
}

fn collect_step(
    c: &mut Collector,
    agent: &Agent,
    cfg: &LearnerConfig,
    buffer: &mut ReplayBuffer,
    rng: &mut Rng64,
    episode_sources: &mut Vec<(bool, bool)>,
) -> Result<Source> {
    if c.needs_reset {
        c.obs = c.env.reset(rng);
        if let Some(e) = c.expert.as_mut() {
            e.reset();
        }
        c.intertwiner.reset(rng);
        c.needs_reset = false;
        c.step_in_episode = 0;
        c.sources = (false, false);
    }
    let expert_action = match c.expert.as_mut() {
        Some(e) => Some(e.act(&c.obs)?),
        None => None,
    };
    let source = if cfg.mode.uses_expert() {
        c.intertwiner.choose(rng)
    } else {
        Source::Policy
    };
    let raw = match (source, &expert_action) {
        (Source::Expert, Some(a)) => a.clone(),
        _ => {
            let bounds = c.env.spec().bounds();
            agent.act(&c.obs, cfg.act_mode, &cfg.req, &bounds, rng)?
        }
    };
    let action = c.env.spec().clip(&raw)?;
    let step = c.env.step(&action)?;
    match source {
        Source::Expert => c.sources.1 = true,
        Source::Policy => c.sources.0 = true,
    }
    buffer.push(Transition {
        observation: std::mem::take(&mut c.obs),
        action,
        reward: step.reward,
        next_observation: step.observation.clone(),
        terminal: step.terminal,
        source,
        episode_id: c.episode,
        step_index: c.step_in_episode,
        expert_action: if cfg.mode == Mode::Rlfse {
            expert_action
        } else {
            None
        },
    });
    c.obs = step.observation;
    c.step_in_episode += 1;
    if step.terminal || step.truncated {
        c.episode += 1;
        c.needs_reset = true;
        episode_sources.push(c.sources);
    }
    Ok(source)
}

/// Acts in `env` with `mode` for one episode (no learning); returns the
/// transitions and whether the episode succeeded.
pub fn rollout_episode(
    env: &mut dyn Environment,
    actor: &mut dyn FnMut(&[f64], &mut Rng64) -> Result<Vec<f64>>,
    source: Source,
    episode_id: u64,
    rng: &mut Rng64,
) -> Result<(Vec<Transition>, bool)> {
    let mut obs = env.reset(rng);
    let mut out = Vec::new();
    loop {
        let action = env.spec().clip(&actor(&obs, rng)?)?;
        let step = env.step(&action)?;
        out.push(Transition {
            observation: obs,
            action,
            reward: step.reward,
            next_observation: step.observation.clone(),
            terminal: step.terminal,
            source,
            episode_id,
            step_index: out.len() as u64,
            expert_action: None,
        });
        obs = step.observation;
        if step.terminal || step.truncated {
            return Ok((out, env.succeeded()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_env, PointMassWorld};
    use crate::learner::NetworkConfig;

    fn small(mode: Mode) -> LearnerConfig {
        LearnerConfig {
            total_steps: 30,
            batch_size: 8,
            warmup: 16,
            eval_period: 10,
            eval_episodes: 3,
            network: NetworkConfig {
                hidden: vec![8, 8],
                ..NetworkConfig::default()
            },
            ..LearnerConfig::for_mode(mode)
        }
    }

    fn point_mass() -> Box<dyn Environment> {
        make_env("point_mass", &serde_json::Value::Null).unwrap()
    }

    fn expert() -> Box<dyn Expert> {
        Box::new(PointMassWorld::expert(PointMassWorld::scripted_expert()).unwrap())
    }

    #[test]
    fn offline_never_touches_the_environment() {
        let mut env = point_mass();
        let mut rng = seeded_rng(0);
        let mut data = Vec::new();
        for e in 0..3 {
            let (t, _) = rollout_episode(
                env.as_mut(),
                &mut |_, _| Ok(vec![0.3, 0.1, 1.0]),
                Source::Policy,
                e,
                &mut rng,
            )
            .unwrap();
            data.extend(t);
        }
        let inputs = TrainingInputs {
            eval_env: Some(point_mass()),
            dataset: Some(ReplayBuffer::from_transitions(data, 1000)),
            ..TrainingInputs::default()
        };
        let out = run_training(inputs, &small(Mode::Offline), 1, &mut |_| {}).unwrap();
        assert_eq!(out.env_steps, 0);
        assert_eq!(out.agent.steps, 30);
        assert_eq!(out.metrics.len(), 3);
    }

    #[test]
    fn mode_input_mismatches_rejected() {
        let cfg = small(Mode::Offline);
        let empty = TrainingInputs {
            eval_env: Some(point_mass()),
            dataset: Some(ReplayBuffer::new(10)),
            ..TrainingInputs::default()
        };
        assert!(run_training(empty, &cfg, 0, &mut |_| {}).is_err());
        let with_env = TrainingInputs {
            env: Some(point_mass()),
            ..TrainingInputs::default()
        };
        assert!(run_training(with_env, &cfg, 0, &mut |_| {}).is_err());
        let no_expert = TrainingInputs {
            env: Some(point_mass()),
            ..TrainingInputs::default()
        };
        assert!(run_training(no_expert, &small(Mode::Rlfse), 0, &mut |_| {}).is_err());
    }

    #[test]
    fn rlfd_episodes_have_a_single_actor() {
        let cfg = LearnerConfig {
            total_steps: 400,
            eval_period: 0,
            ..small(Mode::Rlfd)
        };
        let inputs = TrainingInputs {
            env: Some(point_mass()),
            expert: Some(expert()),
            ..TrainingInputs::default()
        };
        let out = run_training(inputs, &cfg, 4, &mut |_| {}).unwrap();
        assert!(out.episode_sources.iter().all(|(p, e)| p != e));
        assert!(out.episodes >= 5);
    }

    #[test]
    fn seeded_runs_repeat_exactly() {
        let run = || {
            let inputs = TrainingInputs {
                env: Some(point_mass()),
                expert: Some(expert()),
                ..TrainingInputs::default()
            };
            run_training(inputs, &small(Mode::Rlfse), 7, &mut |_| {}).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.agent, b.agent);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let env = point_mass();
        let prior = GaussianPolicy::init(11, 3, &[8], 0.5, &mut seeded_rng(1)).unwrap();
        let a = evaluate_policy(&prior, env.as_ref(), 10, 3).unwrap();
        let b = evaluate_policy(&prior, env.as_ref(), 10, 3).unwrap();
        assert_eq!(a, b);
        let wrong = GaussianPolicy::init(5, 3, &[8], 0.5, &mut seeded_rng(1)).unwrap();
        assert!(evaluate_policy(&wrong, env.as_ref(), 1, 0).is_err());
    }
}
