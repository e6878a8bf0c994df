use std::path::{Path, PathBuf};

use rand::Rng;

use super::{MetricsSeries, RunConfig};
use crate::envs::{make_env, Environment, PointMassWorld};
use crate::error::{ReqError, Result};
use crate::experts::{Expert, MotionSequence};
use crate::learner::{
    evaluate_actor, evaluate_policy, load_offline_dataset, rollout_episode, run_training,
    save_dataset, Agent, EvalStats, Mode, Source, TrainingInputs,
};
use crate::seeded_rng;

/// Builds an expert for an environment: `scripted` (the weak reference
/// expert), `tight` (the well-tuned one) or a path to a JSON motion plan.
pub fn make_expert(env: &str, name: &str) -> Result<Box<dyn Expert>> {
    if env != "point_mass" {
        return Err(ReqError::Unknown {
            kind: "expert environment",
            name: env.to_string(),
        });
    }
    let plan = match name {
        "scripted" => PointMassWorld::scripted_expert(),
        "tight" => PointMassWorld::tight_expert(),
        path if path.ends_with(".json") => {
            MotionSequence::from_json(&std::fs::read_to_string(path)?)?
        }
        other => {
            return Err(ReqError::Unknown {
                kind: "expert",
                name: other.to_string(),
            })
        }
    };
    Ok(Box::new(PointMassWorld::expert(plan)?))
}

/// Files and statistics produced by [`run`].
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub metrics: MetricsSeries,
    pub env_steps: u64,
    pub expert_steps: u64,
    pub episodes: u64,
}

impl RunSummary {
    pub fn final_success(&self) -> Option<f64> {
        self.metrics.last().map(|r| r.success_rate)
    }
}

/// Trains according to `cfg`, writing `config.json` (before training),
/// `metrics.csv` (after every evaluation) and `checkpoint/` to the run
/// directory.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir)?;
    cfg.save(&dir.join("config.json"))?;

    let env = make_env(&cfg.env, &cfg.env_params)?;
    let dims = (env.spec().obs_dim, env.spec().action_dim);
    let expert = cfg
        .expert
        .as_deref()
        .map(|name| make_expert(&cfg.env, name))
        .transpose()?;
    let dataset = cfg
        .dataset
        .as_deref()
        .map(|p| load_offline_dataset(p, Some(dims)))
        .transpose()?;
    let inputs = if cfg.learner.mode == Mode::Offline {
        TrainingInputs {
            env: None,
            eval_env: Some(env),
            dataset,
            expert,
        }
    } else {
        TrainingInputs {
            env: Some(env),
            eval_env: None,
            dataset,
            expert,
        }
    };

    let metrics_path = dir.join("metrics.csv");
    let mut series = MetricsSeries::new();
    series.save(&metrics_path)?;
    let mut failure = None;
    let outcome = run_training(inputs, &cfg.learner, cfg.seed, &mut |row| {
        if failure.is_some() {
            return;
        }
        if let Err(e) = series.push(*row).and_then(|_| series.save(&metrics_path)) {
            failure = Some(e);
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    outcome.agent.save(&dir.join("checkpoint"), &cfg.learner)?;
    Ok(RunSummary {
        dir,
        metrics: series,
        env_steps: outcome.env_steps,
        expert_steps: outcome.expert_steps,
        episodes: outcome.episodes,
    })
}

/// Evaluates a saved checkpoint's prior mean on `env`.
pub fn evaluate_checkpoint(
    dir: &Path,
    env: &dyn Environment,
    episodes: usize,
    seed: u64,
) -> Result<EvalStats> {
    let agent = Agent::load(dir)?;
    agent.check_dims(env.spec().obs_dim, env.spec().action_dim)?;
    evaluate_policy(&agent.prior, env, episodes, seed)
}

/// Evaluates a named expert as if it were a policy.
pub fn evaluate_expert(
    env_name: &str,
    env: &dyn Environment,
    expert: &str,
    episodes: usize,
    seed: u64,
) -> Result<EvalStats> {
    evaluate_actor(env, episodes, seed, || {
        let mut e = make_expert(env_name, expert)?;
        e.reset();
        Ok(move |obs: &[f64]| e.act(obs))
    })
}

/// How a dataset is generated.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecipe {
    pub env: String,
    pub env_params: serde_json::Value,
    /// Expert name for expert episodes; `None` makes every episode random.
    pub expert: Option<String>,
    pub episodes: usize,
    /// Share of episodes acted with uniform random actions, spread evenly.
    pub random_fraction: f64,
    pub seed: u64,
}

/// Whether episode `i` of a recipe is a random one: exactly
/// `floor(n * fraction)` of the first `n` episodes are.
fn is_random_episode(i: usize, fraction: f64) -> bool {
    ((i + 1) as f64 * fraction).floor() > (i as f64 * fraction).floor()
}

/// Rolls out episodes per `recipe` and writes them as JSON lines to `path`.
/// Returns the number of transitions written.
pub fn generate_dataset(recipe: &DatasetRecipe, path: &Path) -> Result<usize> {
    if !(0.0..=1.0).contains(&recipe.random_fraction) {
        return Err(ReqError::Config(
            "random fraction must lie in [0, 1]".into(),
        ));
    }
    let mut env = make_env(&recipe.env, &recipe.env_params)?;
    let bounds = env.spec().bounds();
    let mut expert = match &recipe.expert {
        Some(name) => Some(make_expert(&recipe.env, name)?),
        None if recipe.random_fraction < 1.0 => {
            return Err(ReqError::Config(
                "expert episodes requested without an expert".into(),
            ))
        }
        None => None,
    };
    let mut rng = seeded_rng(recipe.seed);
    let mut all = Vec::new();
    for i in 0..recipe.episodes {
        let (transitions, _) = match expert.as_mut() {
            Some(e) if !is_random_episode(i, recipe.random_fraction) => {
                e.reset();
                rollout_episode(
                    env.as_mut(),
                    &mut |obs, _| e.act(obs),
                    Source::Expert,
                    i as u64,
                    &mut rng,
                )?
            }
            _ => rollout_episode(
                env.as_mut(),
                &mut |_, rng| {
                    Ok(bounds
                        .low
                        .iter()
                        .zip(&bounds.high)
                        .map(|(l, h)| rng.random_range(*l..=*h))
                        .collect())
                },
                Source::Policy,
                i as u64,
                &mut rng,
            )?,
        };
        all.extend(transitions);
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    save_dataset(path, &all)?;
    Ok(all.len())
}
