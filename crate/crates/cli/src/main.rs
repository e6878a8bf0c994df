use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use req_core::envs::make_env;
use req_core::harness::{
    desk_learner, evaluate_checkpoint, evaluate_expert, generate_dataset, output_root, run,
    run_oracle_checks, sweep, DatasetRecipe, RunConfig, PRESETS,
};
use req_core::learner::Mode;
use req_core::req_math::Operator;

#[derive(Parser)]
#[command(
    name = "req",
    version,
    about = "Relative entropy Q-learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write config.json, metrics.csv and checkpoint/.
    Train(TrainArgs),
    /// Evaluate a checkpoint (or a named expert) with prior-mean acting.
    Eval(EvalArgs),
    /// Roll out an expert and/or random actions into a JSON-lines dataset.
    GenDataset(GenArgs),
    /// Run the exact-oracle self-checks.
    OracleCheck,
    /// Run a named grid of training runs over seeds.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Start from this run config instead of the desk defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    /// offpolicy | offline | rlfd | rlfse
    #[arg(long)]
    mode: Option<String>,
    /// req | td0
    #[arg(long)]
    operator: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    lambda_psi: Option<f64>,
    #[arg(long)]
    lambda_intertwine: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    /// Expert name (scripted, tight) or JSON motion plan path.
    #[arg(long)]
    expert: Option<String>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Clone all dataset actions instead of filtering by advantage.
    #[arg(long)]
    behavior_cloning: bool,
    #[arg(long)]
    eval_period: Option<u64>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    /// Run directory; defaults to <output root>/<env>-<mode>-seed<seed>.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint directory (the run's checkpoint/ folder).
    #[arg(long, conflicts_with = "expert", required_unless_present = "expert")]
    checkpoint: Option<PathBuf>,
    /// Evaluate a named expert instead of a checkpoint.
    #[arg(long)]
    expert: Option<String>,
    #[arg(long, default_value = "point_mass")]
    env: String,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "point_mass")]
    env: String,
    #[arg(long)]
    expert: Option<String>,
    #[arg(long, default_value_t = 200)]
    episodes: usize,
    /// Share of episodes acted uniformly at random.
    #[arg(long, default_value_t = 0.0)]
    random_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to <output root>/dataset.jsonl.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// One of: rlfse-vs-rlfd, req-vs-crr, offline-vs-bc, lambda-psi,
    /// lambda-intertwine, action-samples, dual-steps.
    #[arg(long)]
    preset: String,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    seeds: Vec<u64>,
    /// Defaults to <output root>/sweep-<preset>.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => {
            RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?
        }
        None => {
            let mode = Mode::parse(a.mode.as_deref().unwrap_or("offpolicy"))?;
            RunConfig {
                learner: desk_learner(mode),
                expert: mode.uses_expert().then(|| "scripted".to_string()),
                ..RunConfig::default()
            }
        }
    };
    if let Some(mode) = &a.mode {
        cfg.learner.mode = Mode::parse(mode)?;
    }
    if let Some(env) = a.env {
        cfg.env = env;
    }
    if let Some(op) = a.operator {
        cfg.learner.operator = match op.as_str() {
            "req" => Operator::Req,
            "td0" => Operator::Td0,
            other => bail!("unknown operator `{other}` (expected req or td0)"),
        };
    }
    if let Some(e) = a.epsilon {
        cfg.learner.req.epsilon = e;
    }
    if let Some(p) = a.lambda_psi {
        cfg.learner.intertwine.lambda_psi = p;
    }
    if let Some(p) = a.lambda_intertwine {
        cfg.learner.intertwine.lambda_intertwine = p;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = a.steps {
        cfg.learner.total_steps = s;
    }
    if a.expert.is_some() {
        cfg.expert = a.expert;
    }
    if a.dataset.is_some() {
        cfg.dataset = a.dataset;
    }
    if a.behavior_cloning {
        cfg.learner.behavior_cloning = true;
    }
    if let Some(p) = a.eval_period {
        cfg.learner.eval_period = p;
    }
    if let Some(n) = a.eval_episodes {
        cfg.learner.eval_episodes = n;
    }
    if !cfg.learner.mode.uses_expert() {
        cfg.expert = None;
    }
    cfg.output_dir = match a.output {
        Some(dir) => dir,
        None if a.config.is_some() => cfg.output_dir,
        None => output_root().join(format!(
            "{}-{}-seed{}",
            cfg.env,
            serde_json::to_value(cfg.learner.mode)?
                .as_str()
                .unwrap_or("run"),
            cfg.seed
        )),
    };
    let summary = run(&cfg)?;
    println!(
        "run directory {}; {} env steps ({} expert), {} episodes; final success {}",
        summary.dir.display(),
        summary.env_steps,
        summary.expert_steps,
        summary.episodes,
        summary
            .final_success()
            .map_or("n/a".into(), |s| format!("{s:.3}")),
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let env = make_env(&a.env, &serde_json::Value::Null)?;
    let stats = match (&a.checkpoint, &a.expert) {
        (Some(dir), _) => evaluate_checkpoint(dir, env.as_ref(), a.episodes, a.seed)?,
        (None, Some(name)) => evaluate_expert(&a.env, env.as_ref(), name, a.episodes, a.seed)?,
        (None, None) => bail!("pass --checkpoint or --expert"),
    };
    println!(
        "mean_return {:.4} success_rate {:.4}",
        stats.mean_return, stats.success_rate
    );
    Ok(())
}

fn gen_dataset(a: GenArgs) -> Result<()> {
    let path = a
        .output
        .unwrap_or_else(|| output_root().join("dataset.jsonl"));
    let recipe = DatasetRecipe {
        env: a.env,
        env_params: serde_json::Value::Null,
        expert: a.expert,
        episodes: a.episodes,
        random_fraction: a.random_fraction,
        seed: a.seed,
    };
    let n = generate_dataset(&recipe, &path)?;
    println!(
        "wrote {n} transitions from {} episodes to {}",
        recipe.episodes,
        path.display()
    );
    Ok(())
}

fn oracle_check() -> Result<bool> {
    let mut ok = true;
    for c in run_oracle_checks()? {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        ok &= c.passed;
    }
    Ok(ok)
}

fn run_sweep(a: SweepArgs) -> Result<()> {
    if !PRESETS.contains(&a.preset.as_str()) {
        bail!(
            "unknown preset `{}`; choose one of {}",
            a.preset,
            PRESETS.join(", ")
        );
    }
    let root = a
        .output
        .unwrap_or_else(|| output_root().join(format!("sweep-{}", a.preset)));
    sweep(&a.preset, &a.seeds, &root, &mut |r| {
        println!(
            "{} seed {}: final success {:.3}, steps to threshold {}",
            r.label,
            r.seed,
            r.final_success,
            r.steps_to_threshold
                .map_or("never".into(), |s| s.to_string())
        );
    })?;
    println!("summary written to {}", root.join("summary.csv").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a).map(|_| true),
        Command::Eval(a) => eval(a).map(|_| true),
        Command::GenDataset(a) => gen_dataset(a).map(|_| true),
        Command::OracleCheck => oracle_check(),
        Command::Sweep(a) => run_sweep(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
