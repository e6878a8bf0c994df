//! Per-state temperature of the KL-constrained softmax policy.
//!
//! For action samples with values `q_j` drawn from the prior (base masses
//! `p_j`, uniform `1/M` for Monte-Carlo samples) the improved policy puts
//! weight `w_j ∝ p_j exp(q_j / eta)` on each sample, with `eta` minimizing
//! the convex dual
//!
//! ```text
//! g(eta) = eta * eps + eta * log sum_j p_j exp(q_j / eta)
//! ```
//!
//! whose derivative is `eps - KL(w || p)`.

use serde::{Deserialize, Serialize};

use super::ReqConfig;
use crate::par;

/// KL budgets at or below this value select the prior-evaluation limit
/// (`eta = eta_max`, weights equal to the base masses).
pub const TD0_EPSILON: f64 = 1e-6;

/// Convergence target on `|KL - eps|` for the inner solve.
const KL_TOLERANCE: f64 = 1e-10;

/// Temperature found for one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualSolveResult {
    pub eta: f64,
    /// `sum_j w_j log(w_j / p_j)` at `eta`.
    pub sample_kl: f64,
    /// Whether the KL constraint binds.
    pub active: bool,
}

/// Normalized weights over action samples and the weighted value.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageWeights {
    pub weights: Vec<f64>,
    pub value: f64,
}

fn max_of(q: &[f64]) -> f64 {
    q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn uniform(m: usize) -> Vec<f64> {
    vec![1.0 / m as f64; m]
}

/// `eta * eps + eta * log((1/M) sum_j exp(q_j / eta))`, evaluated with the
/// maximum subtracted.
pub fn dual_value(q_samples: &[f64], eta: f64, epsilon: f64) -> f64 {
    dual_value_weighted(q_samples, &uniform(q_samples.len()), eta, epsilon)
}

pub fn dual_value_weighted(q_samples: &[f64], base: &[f64], eta: f64, epsilon: f64) -> f64 {
    let max = max_of(q_samples);
    let sum: f64 = q_samples
        .iter()
        .zip(base)
        .map(|(q, p)| p * ((q - max) / eta).exp())
        .sum();
    eta * epsilon + max + eta * sum.ln()
}

/// Self-normalized importance weights `w_j ∝ exp(q_j / eta)` over uniform
/// samples. At `eta >= eta_max` the weights are exactly uniform, at
/// `eta <= eta_min` exactly greedy (ties share mass), matching the limits
/// of the softmax.
pub fn softmax_weights(q_samples: &[f64], eta: f64, cfg: &ReqConfig) -> AdvantageWeights {
    softmax_weights_weighted(q_samples, &uniform(q_samples.len()), eta, cfg)
}

pub fn softmax_weights_weighted(
    q_samples: &[f64],
    base: &[f64],
    eta: f64,
    cfg: &ReqConfig,
) -> AdvantageWeights {
    let weights = if eta >= cfg.eta_max {
        let total: f64 = base.iter().sum();
        base.iter().map(|p| p / total).collect()
    } else if eta <= cfg.eta_min {
        greedy_weights(q_samples, base)
    } else {
        raw_softmax(q_samples, base, eta)
    };
    let value = weights.iter().zip(q_samples).map(|(w, q)| w * q).sum();
    AdvantageWeights { weights, value }
}

fn raw_softmax(q: &[f64], base: &[f64], eta: f64) -> Vec<f64> {
    let max = max_of(q);
    let mut w: Vec<f64> = q
        .iter()
        .zip(base)
        .map(|(q, p)| p * ((q - max) / eta).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

fn greedy_weights(q: &[f64], base: &[f64]) -> Vec<f64> {
    let max = max_of(q);
    let mass: f64 = q
        .iter()
        .zip(base)
        .filter(|(q, _)| **q == max)
        .map(|(_, p)| p)
        .sum();
    q.iter()
        .zip(base)
        .map(|(q, p)| if *q == max { p / mass } else { 0.0 })
        .collect()
}

/// `sum_j w_j log(w_j / p_j)`, with `0 log 0 = 0`.
pub fn sample_kl(weights: &[f64], base: &[f64]) -> f64 {
    weights
        .iter()
        .zip(base)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, p)| w * (w / p).ln())
        .sum::<f64>()
        .max(0.0)
}

fn is_constant(q: &[f64]) -> bool {
    let max = max_of(q);
    let min = q.iter().copied().fold(f64::INFINITY, f64::min);
    max - min <= 1e-12 * max.abs().max(1.0)
}

/// KL of the greedy policy: `-log(mass of the maximizers)`.
fn greedy_kl(q: &[f64], base: &[f64]) -> f64 {
    let max = max_of(q);
    let mass: f64 = q
        .iter()
        .zip(base)
        .filter(|(q, _)| **q == max)
        .map(|(_, p)| p)
        .sum();
    let total: f64 = base.iter().sum();
    -(mass / total).ln()
}

/// Standard deviation of the samples under the base masses.
fn weighted_std(q: &[f64], base: &[f64]) -> f64 {
    let total: f64 = base.iter().sum();
    let mean = q.iter().zip(base).map(|(q, p)| p * q).sum::<f64>() / total;
    (q.iter()
        .zip(base)
        .map(|(q, p)| p * (q - mean).powi(2))
        .sum::<f64>()
        / total)
        .sqrt()
}

/// KL and weighted variance of `q` at temperature `eta`.
fn kl_and_variance(q: &[f64], base: &[f64], eta: f64) -> (f64, f64) {
    let w = raw_softmax(q, base, eta);
    let kl = sample_kl(&w, base);
    let mean: f64 = w.iter().zip(q).map(|(w, q)| w * q).sum();
    let var = w.iter().zip(q).map(|(w, q)| w * (q - mean).powi(2)).sum();
    (kl, var)
}

/// Temperature for uniform samples, initialized at their standard deviation.
pub fn solve_temperature(q_samples: &[f64], cfg: &ReqConfig) -> DualSolveResult {
    let base = uniform(q_samples.len());
    solve_temperature_weighted(q_samples, &base, cfg, None)
}

/// Temperature for samples with base masses `base`. `eta_init` overrides the
/// per-state standard-deviation initializer.
pub fn solve_temperature_weighted(
    q_samples: &[f64],
    base: &[f64],
    cfg: &ReqConfig,
    eta_init: Option<f64>,
) -> DualSolveResult {
    if cfg.epsilon <= TD0_EPSILON {
        return DualSolveResult {
            eta: cfg.eta_max,
            sample_kl: 0.0,
            active: !is_constant(q_samples),
        };
    }
    if is_constant(q_samples) {
        return DualSolveResult {
            eta: cfg.default_eta(),
            sample_kl: 0.0,
            active: false,
        };
    }
    let greedy = greedy_kl(q_samples, base);
    if greedy <= cfg.epsilon {
        // Slack even for the greedy policy: g is increasing, so the dual
        // optimum is the lower bound.
        return DualSolveResult {
            eta: cfg.eta_min,
            sample_kl: greedy,
            active: false,
        };
    }
    let eta0 = eta_init.unwrap_or_else(|| weighted_std(q_samples, base));
    let eta = minimize_dual(cfg, eta0, |eta| kl_and_variance(q_samples, base, eta));
    let sample_kl = if eta >= cfg.eta_max {
        0.0
    } else {
        kl_and_variance(q_samples, base, eta).0
    };
    DualSolveResult {
        eta,
        sample_kl,
        active: true,
    }
}

/// Runs `cfg.dual_steps` temperature-scaled gradient steps on the dual in
/// `log eta`. Each step `-eta * g'(eta) = eta * (KL - eps)` is preconditioned
/// by the dual's curvature (`Var_w(q) / eta`), and falls back to bisection
/// whenever it would leave the bracket of known sign of `g'`.
fn minimize_dual<F>(cfg: &ReqConfig, eta0: f64, kl_var: F) -> f64
where
    F: Fn(f64) -> (f64, f64),
{
    let (mut lo, mut hi) = (cfg.eta_min.ln(), cfg.eta_max.ln());
    let mut u = eta0.clamp(cfg.eta_min, cfg.eta_max).ln();
    for _ in 0..cfg.dual_steps {
        let eta = u.exp();
        let (kl, var) = kl_var(eta);
        let excess = kl - cfg.epsilon;
        if excess.abs() <= KL_TOLERANCE {
            break;
        }
        if excess > 0.0 {
            lo = lo.max(u);
        } else {
            hi = hi.min(u);
        }
        let gradient = eta * -excess;
        let curvature = var / eta;
        let candidate = if curvature > 0.0 {
            u - gradient / curvature
        } else {
            f64::NAN
        };
        u = if candidate.is_finite() && candidate > lo && candidate < hi {
            candidate
        } else {
            0.5 * (lo + hi)
        };
    }
    u.exp().clamp(cfg.eta_min, cfg.eta_max)
}

/// Solves a batch of states. Honors the configured initializer and
/// constraint scope; each state is independent and solved in parallel
/// under [`ConstraintScope::PerState`](super::ConstraintScope::PerState).
pub fn solve_batch(q_sets: &[Vec<f64>], cfg: &ReqConfig) -> Vec<DualSolveResult> {
    use super::{ConstraintScope, EtaInit};
    let init = match cfg.eta_init {
        EtaInit::PerState => None,
        EtaInit::BatchMean => {
            let n = q_sets.len().max(1) as f64;
            let mean_std = q_sets
                .iter()
                .map(|q| weighted_std(q, &uniform(q.len())))
                .sum::<f64>()
                / n;
            Some(mean_std.max(cfg.eta_min))
        }
    };
    match cfg.constraint {
        ConstraintScope::PerState => par::map_range(q_sets.len(), |i| {
            let q = &q_sets[i];
            solve_temperature_weighted(q, &uniform(q.len()), cfg, init)
        }),
        ConstraintScope::BatchAverage => solve_shared(q_sets, cfg, init),
    }
}

/// One temperature for the whole batch: minimizes the mean of the per-state
/// duals, so the batch-average KL meets the budget.
fn solve_shared(q_sets: &[Vec<f64>], cfg: &ReqConfig, init: Option<f64>) -> Vec<DualSolveResult> {
    let n = q_sets.len().max(1) as f64;
    let bases: Vec<Vec<f64>> = q_sets.iter().map(|q| uniform(q.len())).collect();
    let mean_greedy = q_sets
        .iter()
        .zip(&bases)
        .map(|(q, b)| greedy_kl(q, b))
        .sum::<f64>()
        / n;
    let all_constant = q_sets.iter().all(|q| is_constant(q));
    let (eta, active) = if cfg.epsilon <= TD0_EPSILON {
        (cfg.eta_max, !all_constant)
    } else if all_constant {
        (cfg.default_eta(), false)
    } else if mean_greedy <= cfg.epsilon {
        (cfg.eta_min, false)
    } else {
        let eta0 = init.unwrap_or_else(|| {
            q_sets
                .iter()
                .zip(&bases)
                .map(|(q, b)| weighted_std(q, b))
                .sum::<f64>()
                / n
        });
        let eta = minimize_dual(cfg, eta0.max(cfg.eta_min), |eta| {
            let mut kl = 0.0;
            let mut var = 0.0;
            for (q, b) in q_sets.iter().zip(&bases) {
                if !is_constant(q) {
                    let (k, v) = kl_and_variance(q, b, eta);
                    kl += k;
                    var += v;
                }
            }
            (kl / n, var / n)
        });
        (eta, true)
    };
    q_sets
        .iter()
        .zip(&bases)
        .map(|(q, b)| {
            let w = softmax_weights_weighted(q, b, eta, cfg);
            DualSolveResult {
                eta,
                sample_kl: sample_kl(&w.weights, b),
                active,
            }
        })
        .collect()
}
