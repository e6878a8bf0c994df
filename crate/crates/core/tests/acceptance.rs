//! End-to-end acceptance checks. Each test writes one `PASS` or `FAIL` line
//! straight to stderr (bypassing libtest capture) and then asserts.
//!
//! The oracles here are written independently of the library: plain means
//! and maxima, a bisection on the temperature, value iteration and a linear
//! solve for the chain MDP, central finite differences, closed-form and
//! quadrature Gaussian KLs.

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use req_core::diffcore::{NumArray, ParamSet};
use req_core::envs::{make_env, ChainMdp, Environment, PoseWorld, PoseWorldConfig};
use req_core::experts::{orientation_error, waypoint_action, GainSet, Pose};
use req_core::harness::{desk_learner, evaluate_expert, generate_dataset, offline_recipe};
use req_core::learner::{
    evaluate_policy, load_offline_dataset, run_training, LearnerConfig, Mode, Source,
    TrainingInputs, Transition,
};
use req_core::policy::{
    kl_decoupled, kl_decoupled_grad, log_prob, log_prob_grad, GaussianParams, GaussianPolicy,
};
use req_core::req_math::{
    prior_loss, q_loss, q_loss_from_targets, softmax_weights, solve_temperature, tabular,
    ExpertTerm, Operator, PriorLossInput, QFunction, ReqConfig, TrustRegionState,
};

fn report(name: &str, passed: bool, detail: &str) {
    let line = format!(
        "{} {name}: {detail}\n",
        if passed { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(passed, "{name}: {detail}");
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_q_set(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let m = rng.random_range(2..=64);
    let lo = rng.random_range(-20.0..20.0);
    let range = rng.random_range(1e-3..=10.0);
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

#[test]
fn limit_reductions() {
    let start = Instant::now();
    let mut r = rng(1);
    let (mut worst_mean, mut worst_max): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let q = random_q_set(&mut r);
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        worst_mean = worst_mean.max((implicit_value(&q, 1e-6) - mean).abs());
        worst_max = worst_max.max((implicit_value(&q, 1e3) - max).abs());
    }
    let elapsed = start.elapsed();
    report(
        "limit reductions (small budget -> mean, large budget -> max)",
        worst_mean <= 1e-6 && worst_max <= 1e-4 && elapsed < Duration::from_secs(1),
        &format!("mean gap {worst_mean:.2e}, max gap {worst_max:.2e}, {elapsed:.2?}"),
    );
}

/// KL of the softmax weights at temperature `eta` from uniform.
fn weights_kl(q: &[f64], eta: f64) -> f64 {
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = q.iter().map(|x| ((x - max) / eta).exp()).collect();
    let z: f64 = e.iter().sum();
    let m = q.len() as f64;
    e.iter()
        .map(|x| x / z)
        .filter(|&w| w > 0.0)
        .map(|w| w * (w * m).ln())
        .sum()
}

/// Temperature with `weights_kl == epsilon`, by bisection in `log eta`.
fn bisect_eta(q: &[f64], epsilon: f64) -> f64 {
    let (mut lo, mut hi) = ((1e-8f64).ln(), (1e8f64).ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if weights_kl(q, mid.exp()) > epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

#[test]
fn dual_constraint_satisfaction() {
    let start = Instant::now();
    let cfg = ReqConfig::default();
    assert_eq!((cfg.epsilon, cfg.dual_steps), (0.75, 20));
    let mut r = rng(2);
    let (mut worst_budget, mut worst_oracle): (f64, f64) = (0.0, 0.0);
    let mut states = 0;
    while states < 100 {
        let q = random_q_set(&mut r);
        let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties = q.iter().filter(|&&x| x == max).count();
        let greedy_kl = (q.len() as f64 / ties as f64).ln();
        if greedy_kl <= cfg.epsilon {
            continue;
        }
        states += 1;
        let solve = solve_temperature(&q, &cfg);
        let kl = weights_kl(&q, solve.eta);
        worst_budget = worst_budget.max((kl - cfg.epsilon).abs());
        let oracle_kl = weights_kl(&q, bisect_eta(&q, cfg.epsilon));
        worst_oracle = worst_oracle.max((kl - oracle_kl).abs());
    }
    let elapsed = start.elapsed();
    let tol = (0.05 * cfg.epsilon).max(1e-3);
    report(
        "dual constraint satisfaction",
        worst_budget <= tol && worst_oracle <= 1e-3 && elapsed < Duration::from_secs(1),
        &format!(
            "|KL - eps| <= {worst_budget:.2e}, vs bisection {worst_oracle:.2e}, {elapsed:.2?}"
        ),
    );
}

fn value_iteration(model: &tabular::TabularModel) -> Vec<Vec<f64>> {
    let (s, a) = (model.n_states(), model.n_actions());
    let mut q = vec![vec![0.0; a]; s];
    for _ in 0..5000 {
        let v: Vec<f64> = q
            .iter()
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        q = (0..s)
            .map(|i| {
                (0..a)
                    .map(|j| {
                        model.rewards[i][j]
                            + model.gamma
                                * (0..s)
                                    .map(|k| model.transitions[i][j][k] * v[k])
                                    .sum::<f64>()
                    })
                    .collect()
            })
            .collect();
    }
    q
}

/// Solves `(I - gamma P_pi) V = r_pi`, then `Q = r + gamma P V`.
fn exact_evaluation(model: &tabular::TabularModel, pi: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (s, a) = (model.n_states(), model.n_actions());
    let mut m = DMatrix::<f64>::identity(s, s);
    let mut rhs = DVector::<f64>::zeros(s);
    for i in 0..s {
        for j in 0..a {
            rhs[i] += pi[i][j] * model.rewards[i][j];
            for k in 0..s {
                m[(i, k)] -= model.gamma * pi[i][j] * model.transitions[i][j][k];
            }
        }
    }
    let v = m.lu().solve(&rhs).expect("non-singular");
    (0..s)
        .map(|i| {
            (0..a)
                .map(|j| {
                    model.rewards[i][j]
                        + model.gamma
                            * (0..s)
                                .map(|k| model.transitions[i][j][k] * v[k])
                                .sum::<f64>()
                })
                .collect()
        })
        .collect()
}

fn max_gap(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn tabular_oracle_equivalence() {
    let start = Instant::now();
    let model = ChainMdp::three_state().model().clone();
    assert_eq!((model.n_states(), model.n_actions()), (3, 2));
    let uniform = vec![vec![0.5; 2]; 3];
    let large = ReqConfig {
        epsilon: 1e3,
        gamma: model.gamma,
        ..ReqConfig::default()
    };
    let (q_large, it_large) =
        tabular::iterate(&model, &uniform, &large, Operator::Req, 1e-12, 1000).unwrap();
    let gap_star = max_gap(&q_large, &value_iteration(&model));

    let prior = vec![vec![0.3, 0.7], vec![0.8, 0.2], vec![0.45, 0.55]];
    let zero = ReqConfig {
        epsilon: 0.0,
        ..large
    };
    let (q_zero, it_zero) =
        tabular::iterate(&model, &prior, &zero, Operator::Req, 1e-12, 1000).unwrap();
    let gap_prior = max_gap(&q_zero, &exact_evaluation(&model, &prior));
    let elapsed = start.elapsed();
    report(
        "tabular oracle equivalence",
        gap_star <= 1e-6 && gap_prior <= 1e-6 && it_large <= 1000 && it_zero <= 1000 && elapsed < Duration::from_secs(1),
        &format!(
            "|Q - Q*| {gap_star:.2e} ({it_large} iters), |Q - Q_prior| {gap_prior:.2e} ({it_zero} iters), {elapsed:.2?}"
        ),
    );
}

/// Central differences of `f` over every parameter reachable through `params`.
fn param_fd<T>(
    model: &mut T,
    params: fn(&mut T) -> &mut ParamSet,
    f: &dyn Fn(&T) -> f64,
) -> Vec<f64> {
    let h = 1e-5;
    let n = params(model).total_size();
    (0..n)
        .map(|i| {
            params(model).perturb(i, h);
            let up = f(model);
            params(model).perturb(i, -2.0 * h);
            let down = f(model);
            params(model).perturb(i, h);
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> NumArray {
    NumArray::matrix(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| r.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap()
}

fn critic_params(q: &mut QFunction) -> &mut ParamSet {
    q.net_mut().params_mut()
}

fn prior_params(p: &mut GaussianPolicy) -> &mut ParamSet {
    p.net_mut().params_mut()
}

#[test]
fn gradient_integrity() {
    let start = Instant::now();
    let mut r = rng(4);
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut record = |name: &'static str, e: f64| match worst.iter_mut().find(|(n, _)| *n == name) {
        Some(entry) => entry.1 = entry.1.max(e),
        None => worst.push((name, e)),
    };
    for trial in 0..3 {
        let (obs, act, rows) = (3 + trial, 2, 5);
        let states = random_matrix(&mut r, rows, obs);
        let actions = random_matrix(&mut r, rows, act);
        let experts = random_matrix(&mut r, rows, act);

        let mut q = QFunction::init(obs, act, &[8, 6], &mut r).unwrap();
        let targets: Vec<f64> = (0..rows).map(|_| r.random_range(-1.0..1.0)).collect();
        let analytic = q_loss_from_targets(&q, &states, &actions, &targets)
            .unwrap()
            .grads
            .flatten();
        let fd = param_fd(&mut q, critic_params, &|q| {
            q_loss_from_targets(q, &states, &actions, &targets)
                .unwrap()
                .loss
        });
        record("q_loss", rel_error(&analytic, &fd));

        let mut prior = GaussianPolicy::init(obs, act, &[8], 0.7, &mut r).unwrap();
        prior.net_mut().params_mut().perturb(0, 0.3);
        let anchor_net = GaussianPolicy::init(obs, act, &[8], 0.5, &mut r).unwrap();
        let anchor = anchor_net.batch(&states).unwrap();
        let indicators: Vec<f64> = (0..rows).map(|i| (i % 2) as f64).collect();
        let expert_ind: Vec<f64> = (0..rows).map(|i| ((i + 1) % 3 == 0) as u8 as f64).collect();
        let trust = TrustRegionState {
            alpha_mean: 0.8,
            alpha_cov: 1.7,
            ..TrustRegionState::default()
        };
        for (name, with_expert, term, trust) in [
            (
                "prior_loss",
                false,
                ExpertTerm::Separate,
                TrustRegionState::default(),
            ),
            (
                "prior_loss with expert term",
                true,
                ExpertTerm::Separate,
                TrustRegionState::default(),
            ),
            (
                "prior_loss with literal expert term",
                true,
                ExpertTerm::Literal,
                TrustRegionState::default(),
            ),
            ("trust-region penalties", true, ExpertTerm::Separate, trust),
        ] {
            let input = PriorLossInput {
                states: &states,
                actions: &actions,
                indicators: &indicators,
                expert: with_expert.then_some((&experts, expert_ind.as_slice())),
                anchor: &anchor,
            };
            let analytic = prior_loss(&prior, input, &trust, term)
                .unwrap()
                .grads
                .flatten();
            let fd = param_fd(&mut prior, prior_params, &|p| {
                prior_loss(p, input, &trust, term).unwrap().loss
            });
            record(name, rel_error(&analytic, &fd));
        }

        for _ in 0..10 {
            let d = r.random_range(1..=4);
            let dist = GaussianParams::new(
                (0..d).map(|_| r.random_range(-1.0..1.0)).collect(),
                (0..d).map(|_| r.random_range(0.2..2.0)).collect(),
            )
            .unwrap();
            let old = GaussianParams::new(
                (0..d).map(|_| r.random_range(-1.0..1.0)).collect(),
                (0..d).map(|_| r.random_range(0.2..2.0)).collect(),
            )
            .unwrap();
            let a: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
            let (gm, gs) = log_prob_grad(&dist, &a);
            let (km, ks) = kl_decoupled_grad(&dist, &old);
            let h = 1e-6;
            let mut fd_lp = Vec::new();
            let mut fd_kl = Vec::new();
            for (which, i) in (0..2).flat_map(|w| (0..d).map(move |i| (w, i))) {
                let shifted = |delta: f64| {
                    let mut p = dist.clone();
                    if which == 0 {
                        p.mean[i] += delta;
                    } else {
                        p.stddev[i] += delta;
                    }
                    p
                };
                let (up, down) = (shifted(h), shifted(-h));
                fd_lp.push((log_prob(&up, &a).unwrap() - log_prob(&down, &a).unwrap()) / (2.0 * h));
                let kl = |p: &GaussianParams| {
                    let k = kl_decoupled(p, &old).unwrap();
                    if which == 0 {
                        k.mean
                    } else {
                        k.cov
                    }
                };
                fd_kl.push((kl(&up) - kl(&down)) / (2.0 * h));
            }
            record("log_prob", rel_error(&[gm, gs].concat(), &fd_lp));
            record("decoupled KL", rel_error(&[km, ks].concat(), &fd_kl));
        }
    }
    let elapsed = start.elapsed();
    let max = worst.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let detail: Vec<String> = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    report(
        "gradient integrity",
        max <= 1e-4 && elapsed < Duration::from_secs(30),
        &format!("{}; {elapsed:.2?}", detail.join(", ")),
    );
}

fn closed_form_kl(p: &GaussianParams, q: &GaussianParams) -> f64 {
    (0..p.mean.len())
        .map(|i| {
            let (s1, s2) = (p.stddev[i], q.stddev[i]);
            (s2 / s1).ln() + (s1 * s1 + (p.mean[i] - q.mean[i]).powi(2)) / (2.0 * s2 * s2) - 0.5
        })
        .sum()
}

fn normal_pdf(x: f64, mu: f64, s: f64) -> f64 {
    (-(x - mu).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

/// `KL(p || q)` for 1-D Gaussians by composite Simpson over `mu_p +- 12 s_p`.
fn quadrature_kl(p: (f64, f64), q: (f64, f64)) -> f64 {
    let (lo, hi) = (p.0 - 12.0 * p.1, p.0 + 12.0 * p.1);
    let n = 20_000;
    let h = (hi - lo) / n as f64;
    let f = |x: f64| {
        let a = normal_pdf(x, p.0, p.1);
        let log_ratio = -(x - p.0).powi(2) / (2.0 * p.1 * p.1)
            + (x - q.0).powi(2) / (2.0 * q.1 * q.1)
            + (q.1 / p.1).ln();
        a * log_ratio
    };
    let mut sum = f(lo) + f(hi);
    for i in 1..n {
        sum += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

#[test]
fn gaussian_kl_decomposition() {
    let mut r = rng(5);
    let mut worst_sum: f64 = 0.0;
    for _ in 0..10_000 {
        let d = r.random_range(1..=8);
        let mut g = || {
            GaussianParams::new(
                (0..d).map(|_| r.random_range(-3.0..3.0)).collect(),
                (0..d).map(|_| r.random_range(0.05..3.0)).collect(),
            )
            .unwrap()
        };
        let (p, q) = (g(), g());
        let k = kl_decoupled(&p, &q).unwrap();
        let exact = closed_form_kl(&p, &q);
        // Scaled by the KL magnitude: pairs reach KL ~ 1e4, where one ulp is ~2e-12.
        worst_sum = worst_sum.max((k.mean + k.cov - exact).abs() / exact.abs().max(1.0));
    }
    let mut worst_quad: f64 = 0.0;
    for _ in 0..50 {
        let p = (r.random_range(-2.0..2.0), r.random_range(0.3..2.0));
        let q = (r.random_range(-2.0..2.0), r.random_range(0.3..2.0));
        let k = kl_decoupled(
            &GaussianParams::new(vec![p.0], vec![p.1]).unwrap(),
            &GaussianParams::new(vec![q.0], vec![q.1]).unwrap(),
        )
        .unwrap();
        worst_quad = worst_quad.max((k.mean + k.cov - quadrature_kl(p, q)).abs());
    }
    report(
        "Gaussian KL decomposition",
        worst_sum <= 1e-12 && worst_quad <= 1e-6,
        &format!("sum vs closed form {worst_sum:.2e} (scaled), vs quadrature {worst_quad:.2e}"),
    );
}

fn random_batch(r: &mut ChaCha8Rng, n: usize, obs: usize, act: usize) -> Vec<Transition> {
    (0..n)
        .map(|i| Transition {
            observation: (0..obs).map(|_| r.random_range(-1.0..1.0)).collect(),
            action: (0..act).map(|_| r.random_range(-1.0..1.0)).collect(),
            reward: r.random_range(0.0..1.0),
            next_observation: (0..obs).map(|_| r.random_range(-1.0..1.0)).collect(),
            terminal: i % 7 == 3,
            source: if i % 2 == 0 {
                Source::Expert
            } else {
                Source::Policy
            },
            episode_id: (i / 8) as u64,
            step_index: (i % 8) as u64,
            expert_action: Some((0..act).map(|_| r.random_range(-1.0..1.0)).collect()),
        })
        .collect()
}

#[test]
fn crr_bin_reduction() {
    let mut r = rng(6);
    let mut worst: f64 = 0.0;
    for trial in 0..5 {
        let (obs, act) = (4 + trial, 2);
        let batch = random_batch(&mut r, 32, obs, act);
        let q = QFunction::init(obs, act, &[16, 16], &mut r).unwrap();
        let q_target = QFunction::init(obs, act, &[16, 16], &mut r).unwrap();
        let prior = GaussianPolicy::init(obs, act, &[16], 0.5, &mut r).unwrap();
        let cfg = ReqConfig {
            epsilon: 0.0,
            ..ReqConfig::default()
        };
        let mut grads = Vec::new();
        for op in [Operator::Req, Operator::Td0] {
            let (ql, eval) = q_loss(
                &batch,
                &q,
                &q_target,
                &prior,
                &cfg,
                op,
                None,
                &mut rng(100 + trial as u64),
            )
            .unwrap();
            let states = NumArray::from_rows(
                &batch
                    .iter()
                    .map(|t| t.observation.clone())
                    .collect::<Vec<_>>(),
            )
            .unwrap();
            let actions =
                NumArray::from_rows(&batch.iter().map(|t| t.action.clone()).collect::<Vec<_>>())
                    .unwrap();
            let experts = NumArray::from_rows(
                &batch
                    .iter()
                    .map(|t| t.expert_action.clone().unwrap())
                    .collect::<Vec<_>>(),
            )
            .unwrap();
            let anchor = prior.batch(&states).unwrap();
            let (ind, expert_ind) = (eval.indicators(), eval.expert_indicators());
            let pl = prior_loss(
                &prior,
                PriorLossInput {
                    states: &states,
                    actions: &actions,
                    indicators: &ind,
                    expert: Some((&experts, &expert_ind)),
                    anchor: &anchor,
                },
                &TrustRegionState::default(),
                ExpertTerm::Separate,
            )
            .unwrap();
            grads.push([ql.grads.flatten(), pl.grads.flatten()].concat());
        }
        let gap = grads[0]
            .iter()
            .zip(&grads[1])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(gap);
    }
    report(
        "CRR-bin reduction (td0 vs zero-budget REQ gradients)",
        worst <= 1e-10,
        &format!("max parameter-gradient difference {worst:.2e}"),
    );
}

fn random_unit_quaternion(r: &mut ChaCha8Rng) -> [f64; 4] {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| r.random_range(-1.0..1.0));
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return q.map(|x| x / n);
        }
    }
}

#[test]
fn controller_suite() {
    let mut r = rng(10);
    let mut worst_zero: f64 = 0.0;
    for i in 0..100_000 {
        let q = random_unit_quaternion(&mut r);
        let other = if i % 2 == 0 { q.map(|x| -x) } else { q };
        let p: [f64; 3] = std::array::from_fn(|_| r.random_range(-1.0..1.0));
        let e = orientation_error(&Pose::new(p, q), &Pose::new(p, other)).unwrap();
        worst_zero = worst_zero.max(e.norm());
    }

    let cfg = PoseWorldConfig::default();
    let gains = GainSet::isotropic(10.0, 10.0).unwrap();
    let mut worst_err: f64 = 0.0;
    let mut worst_steps = 0;
    for _ in 0..100 {
        let mut world = PoseWorld::new(cfg.clone());
        let start = Pose::new(
            std::array::from_fn(|_| r.random_range(-1.0..1.0)),
            random_unit_quaternion(&mut r),
        );
        let target = Pose::new(
            std::array::from_fn(|_| r.random_range(-1.0..1.0)),
            random_unit_quaternion(&mut r),
        );
        world.set_state(start, target).unwrap();
        let mut steps = 0;
        for _ in 0..500 {
            let (ep, eo) = world.errors();
            if ep.max(eo) <= 1e-3 {
                break;
            }
            let twist = waypoint_action(world.pose(), &target, &gains).unwrap();
            steps += 1;
            if world.step(&twist).unwrap().done() {
                break;
            }
        }
        let (ep, eo) = world.errors();
        worst_err = worst_err.max(ep.max(eo));
        worst_steps = worst_steps.max(steps);
    }
    report(
        "controller suite",
        worst_zero <= 1e-9 && worst_err <= 1e-3 && worst_steps <= 500,
        &format!("same-rotation error {worst_zero:.2e}, tracking error {worst_err:.4e} within {worst_steps} steps"),
    );
}

// Learning-curve comparisons at desk scale. Budgets are sized for one core,
// and the runs hold a shared lock so their timings do not overlap.

static TRAINING: std::sync::Mutex<()> = std::sync::Mutex::new(());

const RLFSE_STEPS: u64 = 18_000;
const FINAL_EVAL_EPISODES: usize = 200;

fn point_mass() -> Box<dyn Environment> {
    make_env("point_mass", &serde_json::Value::Null).unwrap()
}

fn final_success(
    cfg: &LearnerConfig,
    inputs: TrainingInputs,
    env: &dyn Environment,
    seed: u64,
) -> f64 {
    let out = run_training(inputs, cfg, seed, &mut |_| {}).unwrap();
    evaluate_policy(&out.agent.prior, env, FINAL_EVAL_EPISODES, 1_000 + seed)
        .unwrap()
        .success_rate
}

fn with_expert(env: Box<dyn Environment>) -> TrainingInputs {
    TrainingInputs {
        env: Some(env),
        expert: Some(req_core::harness::make_expert("point_mass", "scripted").unwrap()),
        ..TrainingInputs::default()
    }
}

#[test]
fn rlfse_beats_rlfd_and_expert() {
    let _guard = TRAINING.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let env = point_mass();
    let expert = evaluate_expert("point_mass", env.as_ref(), "scripted", 1000, 77)
        .unwrap()
        .success_rate;
    assert!((0.2..=0.8).contains(&expert), "expert success {expert}");
    let budget = |mode| LearnerConfig {
        total_steps: RLFSE_STEPS,
        eval_period: 0,
        ..desk_learner(mode)
    };
    let (fse_cfg, fd_cfg) = (budget(Mode::Rlfse), budget(Mode::Rlfd));
    assert_eq!(
        (
            fse_cfg.intertwine.lambda_psi,
            fse_cfg.intertwine.lambda_intertwine
        ),
        (0.75, 0.5)
    );
    assert_eq!(fd_cfg.intertwine.lambda_intertwine, 0.0);
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 1..=4 {
        let fse = final_success(&fse_cfg, with_expert(point_mass()), env.as_ref(), seed);
        let fd = final_success(&fd_cfg, with_expert(point_mass()), env.as_ref(), seed);
        let ok = fse >= expert + 0.15 && fse > fd;
        wins += usize::from(ok);
        lines.push(format!("seed {seed}: fse {fse:.3} fd {fd:.3}"));
    }
    let elapsed = start.elapsed();
    report(
        "RLfSE > RLfD > expert on point-mass",
        wins >= 3 && elapsed < Duration::from_secs(15 * 60),
        &format!(
            "expert {expert:.3}; {}; {wins}/4 seeds; {elapsed:.0?}",
            lines.join(", ")
        ),
    );
}

const OFFPOLICY_STEPS: u64 = 10_000;
const OFFPOLICY_THRESHOLD: f64 = 0.8;

#[test]
fn req_learns_faster_than_crr_bin() {
    let _guard = TRAINING.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let reach = || make_env("point_mass_reach", &serde_json::Value::Null).unwrap();
    let mut medians = Vec::new();
    let mut lines = Vec::new();
    for op in [Operator::Req, Operator::Td0] {
        let cfg = LearnerConfig {
            operator: op,
            total_steps: OFFPOLICY_STEPS,
            eval_period: 250,
            eval_episodes: 50,
            ..desk_learner(Mode::Offpolicy)
        };
        let mut steps: Vec<u64> = (1..=3)
            .map(|seed| {
                let inputs = TrainingInputs {
                    env: Some(reach()),
                    ..TrainingInputs::default()
                };
                let out = run_training(inputs, &cfg, seed, &mut |_| {}).unwrap();
                out.metrics
                    .iter()
                    .find(|m| m.success_rate >= OFFPOLICY_THRESHOLD)
                    .map_or(u64::MAX, |m| m.step)
            })
            .collect();
        steps.sort_unstable();
        let shown: Vec<String> = steps
            .iter()
            .map(|&n| {
                if n == u64::MAX {
                    "never".into()
                } else {
                    n.to_string()
                }
            })
            .collect();
        lines.push(format!("{op:?} [{}]", shown.join(", ")));
        medians.push(steps[1]);
    }
    let elapsed = start.elapsed();
    report(
        "REQ reaches the success threshold sooner than CRR-bin",
        medians[0] < medians[1] && elapsed < Duration::from_secs(20 * 60),
        &format!(
            "steps to {OFFPOLICY_THRESHOLD}: {}; {elapsed:.0?}",
            lines.join(", ")
        ),
    );
}

const OFFLINE_STEPS: u64 = 10_000;

#[test]
fn offline_req_beats_behavior_cloning() {
    let _guard = TRAINING.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mixed.jsonl");
    generate_dataset(&offline_recipe(), &path).unwrap();
    let data = load_offline_dataset(&path, Some((11, 3))).unwrap();
    let expert_share = data
        .iter()
        .filter(|t| t.source == Source::Expert)
        .map(|t| t.episode_id)
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    let env = point_mass();
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 1..=4 {
        let mut results = Vec::new();
        for bc in [false, true] {
            let cfg = LearnerConfig {
                behavior_cloning: bc,
                total_steps: OFFLINE_STEPS,
                eval_period: 0,
                ..desk_learner(Mode::Offline)
            };
            let inputs = TrainingInputs {
                eval_env: Some(point_mass()),
                dataset: Some(data.clone()),
                ..TrainingInputs::default()
            };
            results.push(final_success(&cfg, inputs, env.as_ref(), seed));
        }
        wins += usize::from(results[0] >= results[1] + 0.1);
        lines.push(format!(
            "seed {seed}: req {:.3} bc {:.3}",
            results[0], results[1]
        ));
    }
    let elapsed = start.elapsed();
    report(
        "offline REQ beats behavior cloning",
        wins >= 3 && elapsed < Duration::from_secs(15 * 60),
        &format!(
            "{expert_share} expert episodes of 400; {}; {wins}/4 seeds; {elapsed:.0?}",
            lines.join(", ")
        ),
    );
}
