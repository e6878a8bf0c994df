//! Named experiment grids comparing training regimes at desk scale.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{generate_dataset, run, DatasetRecipe, RunConfig};
use crate::error::{ReqError, Result};
use crate::experts::IntertwineConfig;
use crate::learner::{LearnerConfig, Mode, NetworkConfig};
use crate::req_math::Operator;

/// Preset names accepted by [`sweep`].
pub const PRESETS: [&str; 7] = [
    "rlfse-vs-rlfd",
    "req-vs-crr",
    "offline-vs-bc",
    "lambda-psi",
    "lambda-intertwine",
    "action-samples",
    "dual-steps",
];

pub fn preset_names() -> &'static [&'static str] {
    &PRESETS
}

/// Learner settings sized for a single CPU core: two hidden layers of 32,
/// batch 64, discount 0.95 and a 200-step target period.
pub fn desk_learner(mode: Mode) -> LearnerConfig {
    let mut cfg = LearnerConfig::for_mode(mode);
    cfg.batch_size = 64;
    cfg.total_steps = 20_000;
    cfg.target_update_period = 200;
    cfg.warmup = 256;
    cfg.eval_period = 2_000;
    cfg.eval_episodes = 50;
    cfg.req.gamma = 0.95;
    cfg.network = NetworkConfig {
        hidden: vec![32, 32],
        q_lr: 3e-3,
        prior_lr: 3e-3,
        ..NetworkConfig::default()
    };
    cfg
}

/// Success rate used for steps-to-threshold comparisons.
pub const SUCCESS_THRESHOLD: f64 = 0.8;

fn base(env: &str, mode: Mode, seed: u64, dir: &Path, label: &str) -> RunConfig {
    RunConfig {
        env: env.into(),
        env_params: serde_json::Value::Null,
        seed,
        expert: mode.uses_expert().then(|| "scripted".to_string()),
        dataset: None,
        output_dir: dir.join(label).join(format!("seed{seed}")),
        learner: desk_learner(mode),
    }
}

/// The runs of a preset, labelled, without executing them. Offline presets
/// refer to `root/dataset.jsonl`, which [`sweep`] generates first.
pub fn sweep_runs(preset: &str, seeds: &[u64], root: &Path) -> Result<Vec<(String, RunConfig)>> {
    let mut out = Vec::new();
    let mut add = |label: String, f: &dyn Fn(u64, &str) -> RunConfig| {
        for &s in seeds {
            out.push((label.clone(), f(s, &label)));
        }
    };
    match preset {
        "rlfse-vs-rlfd" => {
            add("reqfse".into(), &|s, l| {
                base("point_mass", Mode::Rlfse, s, root, l)
            });
            add("reqfd".into(), &|s, l| {
                base("point_mass", Mode::Rlfd, s, root, l)
            });
            add("crrfse".into(), &|s, l| {
                let mut c = base("point_mass", Mode::Rlfse, s, root, l);
                c.learner.operator = Operator::Td0;
                c
            });
        }
        "req-vs-crr" => {
            for (label, op) in [("req", Operator::Req), ("crr", Operator::Td0)] {
                add(label.into(), &|s, l| {
                    let mut c = base("point_mass_reach", Mode::Offpolicy, s, root, l);
                    c.learner.operator = op;
                    c
                });
            }
        }
        "offline-vs-bc" => {
            for (label, bc) in [("req", false), ("bc", true)] {
                add(label.into(), &|s, l| {
                    let mut c = base("point_mass", Mode::Offline, s, root, l);
                    c.dataset = Some(root.join("dataset.jsonl"));
                    c.learner.behavior_cloning = bc;
                    c
                });
            }
        }
        "lambda-psi" => {
            for psi in [0.25, 0.5, 0.75, 1.0] {
                add(format!("lambda_psi_{psi}"), &|s, l| {
                    let mut c = base("point_mass", Mode::Rlfse, s, root, l);
                    c.learner.intertwine =
                        IntertwineConfig::new(psi, 0.5).expect("valid probabilities");
                    c
                });
            }
        }
        "lambda-intertwine" => {
            for li in [0.0, 0.25, 0.5, 1.0] {
                add(format!("lambda_intertwine_{li}"), &|s, l| {
                    let mut c = base("point_mass", Mode::Rlfse, s, root, l);
                    c.learner.intertwine =
                        IntertwineConfig::new(0.75, li).expect("valid probabilities");
                    c
                });
            }
        }
        "action-samples" => {
            for m in [5, 10, 20, 40] {
                add(format!("samples_{m}"), &|s, l| {
                    let mut c = base("point_mass", Mode::Rlfse, s, root, l);
                    c.learner.req.n_action_samples = m;
                    c
                });
            }
        }
        "dual-steps" => {
            for k in [1, 5, 20] {
                add(format!("dual_steps_{k}"), &|s, l| {
                    let mut c = base("point_mass", Mode::Rlfse, s, root, l);
                    c.learner.req.dual_steps = k;
                    c
                });
            }
        }
        other => {
            return Err(ReqError::Unknown {
                kind: "preset",
                name: other.to_string(),
            })
        }
    }
    Ok(out)
}

/// One line of a sweep's `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub seed: u64,
    pub final_success: f64,
    pub final_return: f64,
    /// First evaluated step at or above [`SUCCESS_THRESHOLD`]; empty if never.
    pub steps_to_threshold: Option<u64>,
}

/// Runs every configuration of a preset in turn and writes
/// `root/summary.csv`. Offline presets first generate a 50/50 dataset of
/// scripted-expert and uniform-random episodes.
pub fn sweep(
    preset: &str,
    seeds: &[u64],
    root: &Path,
    on_done: &mut dyn FnMut(&SweepRow),
) -> Result<Vec<SweepRow>> {
    let runs = sweep_runs(preset, seeds, root)?;
    std::fs::create_dir_all(root)?;
    if preset == "offline-vs-bc" {
        generate_dataset(&offline_recipe(), &root.join("dataset.jsonl"))?;
    }
    let mut rows = Vec::new();
    for (label, cfg) in runs {
        let summary = run(&cfg)?;
        let last = summary.metrics.last();
        let row = SweepRow {
            label,
            seed: cfg.seed,
            final_success: last.map_or(0.0, |r| r.success_rate),
            final_return: last.map_or(0.0, |r| r.episodic_return),
            steps_to_threshold: summary.metrics.steps_to_success(SUCCESS_THRESHOLD),
        };
        on_done(&row);
        rows.push(row);
    }
    let mut w = csv::Writer::from_path(root.join("summary.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

/// The offline dataset used by the `offline-vs-bc` preset.
pub fn offline_recipe() -> DatasetRecipe {
    DatasetRecipe {
        env: "point_mass".into(),
        env_params: serde_json::Value::Null,
        expert: Some("scripted".into()),
        episodes: 400,
        random_fraction: 0.5,
        seed: 17,
    }
}
