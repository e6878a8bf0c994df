//! Fast self-checks against exact oracles, run by `req oracle-check`.

use rand::Rng;

use crate::envs::{ChainMdp, Environment, PoseWorld, PoseWorldConfig};
use crate::experts::{orientation_error, waypoint_action, GainSet, Pose};
use crate::learner::{Source, Transition};
use crate::policy::{kl_decoupled, kl_total, GaussianParams, GaussianPolicy};
use crate::req_math::{
    evaluate_batch, softmax_weights, solve_temperature, tabular, tabular::TabularModel, Operator,
    QFunction, ReqConfig,
};
use crate::{seeded_rng, Result, Rng64};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, worst: f64, tol: f64) -> CheckResult {
    CheckResult {
        name,
        passed: worst <= tol,
        detail: format!("worst {worst:.3e} (tolerance {tol:.0e})"),
    }
}

fn q_set(rng: &mut Rng64) -> Vec<f64> {
    let m = rng.random_range(2..=64);
    let lo = rng.random_range(-5.0..5.0);
    let range = rng.random_range(0.1..=10.0);
    (0..m).map(|_| lo + range * rng.random::<f64>()).collect()
}

fn implicit_value(q: &[f64], epsilon: f64) -> f64 {
    let cfg = ReqConfig {
        epsilon,
        ..ReqConfig::default()
    };
    let solve = solve_temperature(q, &cfg);
    softmax_weights(q, solve.eta, &cfg).value
}

fn limit_mean(rng: &mut Rng64) -> CheckResult {
    let worst = (0..200)
        .map(|_| {
            let q = q_set(rng);
            let mean = q.iter().sum::<f64>() / q.len() as f64;
            (implicit_value(&q, 1e-6) - mean).abs()
        })
        .fold(0.0, f64::max);
    check("small budget gives the sample mean", worst, 1e-6)
}

fn limit_max(rng: &mut Rng64) -> CheckResult {
    let worst = (0..200)
        .map(|_| {
            let q = q_set(rng);
            let max = q.iter().copied().fold(f64::MIN, f64::max);
            (implicit_value(&q, 1e3) - max).abs()
        })
        .fold(0.0, f64::max);
    check("large budget gives the sample max", worst, 1e-4)
}

fn dual_tightness(rng: &mut Rng64) -> CheckResult {
    let cfg = ReqConfig::default();
    let mut worst: f64 = 0.0;
    let mut solved = 0;
    while solved < 100 {
        let q = q_set(rng);
        let s = solve_temperature(&q, &cfg);
        if !s.active {
            continue;
        }
        solved += 1;
        worst = worst.max((s.sample_kl - cfg.epsilon).abs());
    }
    check(
        "active dual solves meet the KL budget",
        worst,
        (0.05 * cfg.epsilon).max(1e-3),
    )
}

fn chain_model() -> (ChainMdp, TabularModel) {
    let env = ChainMdp::three_state();
    let model = env.model().clone();
    (env, model)
}

fn tabular_optimal() -> Result<CheckResult> {
    let (env, model) = chain_model();
    let prior = vec![vec![0.5; 2]; 3];
    let cfg = ReqConfig {
        epsilon: 1e3,
        gamma: model.gamma,
        ..ReqConfig::default()
    };
    let (q, _) = tabular::iterate(&model, &prior, &cfg, Operator::Req, 1e-12, 1000)?;
    let (star, _) = env.exact_policy_iteration();
    let worst = q
        .iter()
        .flatten()
        .zip(star.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(check(
        "chain backup with a large budget reaches Q*",
        worst,
        1e-6,
    ))
}

fn tabular_prior() -> Result<CheckResult> {
    let (env, model) = chain_model();
    let prior = vec![vec![0.2, 0.8], vec![0.7, 0.3], vec![0.5, 0.5]];
    let cfg = ReqConfig {
        epsilon: 0.0,
        gamma: model.gamma,
        ..ReqConfig::default()
    };
    let (q, _) = tabular::iterate(&model, &prior, &cfg, Operator::Req, 1e-12, 1000)?;
    let exact = env.policy_evaluation(&prior)?;
    let worst = q
        .iter()
        .flatten()
        .zip(exact.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(check(
        "chain backup with zero budget evaluates the prior",
        worst,
        1e-6,
    ))
}

fn gaussian(rng: &mut Rng64, d: usize) -> GaussianParams {
    GaussianParams {
        mean: (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
        stddev: (0..d).map(|_| rng.random_range(0.1..2.0)).collect(),
    }
}

fn kl_split(rng: &mut Rng64) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let d = rng.random_range(1..=6);
        let (p, q) = (gaussian(rng, d), gaussian(rng, d));
        let split = kl_decoupled(&p, &q)?;
        worst = worst.max((split.mean + split.cov - kl_total(&p, &q)).abs());
    }
    Ok(check(
        "mean and covariance KL sum to the total",
        worst,
        1e-12,
    ))
}

fn td0_identity(rng: &mut Rng64) -> Result<CheckResult> {
    let (obs, act) = (4, 2);
    let q = QFunction::init(obs, act, &[16], rng)?;
    let prior = GaussianPolicy::init(obs, act, &[16], 0.5, rng)?;
    let batch: Vec<Transition> = (0..16)
        .map(|i| Transition {
            observation: (0..obs).map(|_| rng.random_range(-1.0..1.0)).collect(),
            action: (0..act).map(|_| rng.random_range(-1.0..1.0)).collect(),
            reward: rng.random(),
            next_observation: (0..obs).map(|_| rng.random_range(-1.0..1.0)).collect(),
            terminal: i % 5 == 0,
            source: Source::Policy,
            episode_id: 0,
            step_index: i,
            expert_action: None,
        })
        .collect();
    let cfg = ReqConfig {
        epsilon: 0.0,
        ..ReqConfig::default()
    };
    let a = evaluate_batch(
        &batch,
        &q,
        &prior,
        &cfg,
        Operator::Req,
        None,
        &mut seeded_rng(1),
    )?;
    let b = evaluate_batch(
        &batch,
        &q,
        &prior,
        &cfg,
        Operator::Td0,
        None,
        &mut seeded_rng(1),
    )?;
    let worst = a
        .targets
        .iter()
        .zip(&b.targets)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    Ok(check(
        "zero-budget targets equal the TD(0) targets",
        worst,
        1e-10,
    ))
}

fn random_unit_quaternion(rng: &mut Rng64) -> [f64; 4] {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return q.map(|x| x / n);
        }
    }
}

fn same_rotation(rng: &mut Rng64) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for i in 0..100_000 {
        let q = random_unit_quaternion(rng);
        let other = if i % 2 == 0 { q.map(|x| -x) } else { q };
        let e = orientation_error(&Pose::new([0.0; 3], q), &Pose::new([0.0; 3], other))?;
        worst = worst.max(e.norm());
    }
    Ok(check(
        "orientation error vanishes for equal rotations",
        worst,
        1e-9,
    ))
}

fn pose_tracking(rng: &mut Rng64) -> Result<CheckResult> {
    let cfg = PoseWorldConfig::default();
    let gains = GainSet::isotropic(10.0, 10.0)?;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut world = PoseWorld::new(cfg.clone());
        let start = Pose::new(
            std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
            random_unit_quaternion(rng),
        );
        let target = Pose::new(
            std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
            random_unit_quaternion(rng),
        );
        world.set_state(start, target)?;
        for _ in 0..cfg.max_steps {
            let twist = waypoint_action(world.pose(), &target, &gains)?;
            if world.step(&twist)?.done() {
                break;
            }
        }
        let (ep, eo) = world.errors();
        worst = worst.max(ep.max(eo));
    }
    Ok(check(
        "pose tracking converges within the step budget",
        worst,
        1e-3,
    ))
}

/// Runs every check with a fixed seed.
pub fn run_oracle_checks() -> Result<Vec<CheckResult>> {
    let mut rng = seeded_rng(2024);
    Ok(vec![
        limit_mean(&mut rng),
        limit_max(&mut rng),
        dual_tightness(&mut rng),
        tabular_optimal()?,
        tabular_prior()?,
        kl_split(&mut rng)?,
        td0_identity(&mut rng)?,
        same_rotation(&mut rng)?,
        pose_tracking(&mut rng)?,
    ])
}
