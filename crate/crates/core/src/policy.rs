//! Diagonal Gaussian policy head.
//!
//! The trunk MLP emits `2 * action_dim` values per state: the mean (used
//! as is) and a standard-deviation pre-activation mapped through
//! `softplus(x) + sqrt(MIN_VARIANCE)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffcore::{ForwardCache, Gradients, Mlp, MlpSpec, NumArray};
use crate::error::{ensure_finite, ReqError, Result};

/// Smallest variance the head can emit.
pub const MIN_VARIANCE: f64 = 1e-5;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn min_stddev() -> f64 {
    MIN_VARIANCE.sqrt()
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of `softplus` for positive arguments.
fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// Mean and per-dimension standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl GaussianParams {
    pub fn new(mean: Vec<f64>, stddev: Vec<f64>) -> Result<Self> {
        if mean.len() != stddev.len() {
            return Err(ReqError::shape(
                "GaussianParams",
                "stddev length",
                mean.len(),
                stddev.len(),
            ));
        }
        ensure_finite("GaussianParams mean", &mean)?;
        ensure_finite("GaussianParams stddev", &stddev)?;
        if let Some(i) = stddev.iter().position(|&s| s <= 0.0) {
            return Err(ReqError::NonFinite {
                context: "GaussianParams stddev (must be positive)",
                index: i,
            });
        }
        Ok(GaussianParams { mean, stddev })
    }

    pub fn standard(dim: usize) -> Self {
        GaussianParams {
            mean: vec![0.0; dim],
            stddev: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_prob(&self, action: &[f64]) -> Result<f64> {
        log_prob(self, action)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Vec<f64>> {
        sample(self, rng, n)
    }
}

/// Sum of univariate Gaussian log-densities.
pub fn log_prob(dist: &GaussianParams, action: &[f64]) -> Result<f64> {
    if action.len() != dist.dim() {
        return Err(ReqError::shape(
            "log_prob",
            "action dimension",
            dist.dim(),
            action.len(),
        ));
    }
    Ok(action
        .iter()
        .zip(&dist.mean)
        .zip(&dist.stddev)
        .map(|((a, m), s)| {
            let z = (a - m) / s;
            -0.5 * z * z - s.ln() - 0.5 * LN_2PI
        })
        .sum())
}

/// Partial derivatives of [`log_prob`] with respect to mean and stddev.
pub fn log_prob_grad(dist: &GaussianParams, action: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut d_mean = Vec::with_capacity(dist.dim());
    let mut d_std = Vec::with_capacity(dist.dim());
    for ((a, m), s) in action.iter().zip(&dist.mean).zip(&dist.stddev) {
        let diff = a - m;
        d_mean.push(diff / (s * s));
        d_std.push(diff * diff / (s * s * s) - 1.0 / s);
    }
    (d_mean, d_std)
}

/// Draws `n` independent actions.
pub fn sample<R: Rng + ?Sized>(dist: &GaussianParams, rng: &mut R, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            dist.mean
                .iter()
                .zip(&dist.stddev)
                .map(|(m, s)| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + s * z
                })
                .collect()
        })
        .collect()
}

/// KL split into a mean-only and a covariance-only part.
///
/// `mean = KL(N(new.mean, old.std^2) || old)` and
/// `cov = KL(N(old.mean, new.std^2) || old)`; for diagonal Gaussians they
/// sum to `KL(new || old)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DecoupledKl {
    pub mean: f64,
    pub cov: f64,
}

impl DecoupledKl {
    pub fn total(&self) -> f64 {
        self.mean + self.cov
    }
}

pub fn kl_decoupled(new: &GaussianParams, old: &GaussianParams) -> Result<DecoupledKl> {
    if new.dim() != old.dim() {
        return Err(ReqError::shape(
            "kl_decoupled",
            "dimension",
            old.dim(),
            new.dim(),
        ));
    }
    let mut kl = DecoupledKl::default();
    for i in 0..new.dim() {
        let (sn, so) = (new.stddev[i], old.stddev[i]);
        if sn <= 0.0 || so <= 0.0 {
            return Err(ReqError::NonFinite {
                context: "kl_decoupled stddev (must be positive)",
                index: i,
            });
        }
        let d = new.mean[i] - old.mean[i];
        let ratio = (sn / so).powi(2);
        kl.mean += 0.5 * d * d / (so * so);
        kl.cov += 0.5 * (ratio - 1.0 - ratio.ln());
    }
    Ok(kl)
}

/// Closed-form `KL(new || old)` for diagonal Gaussians, written independently
/// of [`kl_decoupled`].
pub fn kl_total(new: &GaussianParams, old: &GaussianParams) -> f64 {
    (0..new.dim())
        .map(|i| {
            let (mn, sn, mo, so) = (new.mean[i], new.stddev[i], old.mean[i], old.stddev[i]);
            (so / sn).ln() + (sn * sn + (mn - mo).powi(2)) / (2.0 * so * so) - 0.5
        })
        .sum()
}

/// Gradients of the mean part w.r.t. `new.mean` and of the covariance part
/// w.r.t. `new.stddev`. (The mean part does not depend on `new.stddev` and
/// vice versa.)
pub fn kl_decoupled_grad(new: &GaussianParams, old: &GaussianParams) -> (Vec<f64>, Vec<f64>) {
    let d_mean = (0..new.dim())
        .map(|i| (new.mean[i] - old.mean[i]) / old.stddev[i].powi(2))
        .collect();
    let d_std = (0..new.dim())
        .map(|i| new.stddev[i] / old.stddev[i].powi(2) - 1.0 / new.stddev[i])
        .collect();
    (d_mean, d_std)
}

/// Means and standard deviations for a batch of states (`rows x action_dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBatch {
    pub mean: NumArray,
    pub stddev: NumArray,
}

impl GaussianBatch {
    pub fn len(&self) -> usize {
        self.mean.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> GaussianParams {
        GaussianParams {
            mean: self.mean.row(i).to_vec(),
            stddev: self.stddev.row(i).to_vec(),
        }
    }
}

/// Saved forward state for [`GaussianPolicy::backward`].
#[derive(Debug)]
pub struct PolicyCache {
    trunk: ForwardCache,
    raw_std: Vec<f64>,
}

/// Parametric conditional Gaussian `pi(a | s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    net: Mlp,
    action_dim: usize,
}

impl GaussianPolicy {
    /// Random trunk with a small output layer; the initial standard deviation
    /// is `init_stddev` everywhere.
    pub fn init<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        init_stddev: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let net = Mlp::init(MlpSpec::new(obs_dim, hidden, 2 * action_dim), rng, 0.01)?;
        let mut policy = GaussianPolicy { net, action_dim };
        policy.set_stddev_bias(init_stddev)?;
        Ok(policy)
    }

    pub fn from_mlp(net: Mlp, action_dim: usize) -> Result<Self> {
        if net.spec().output != 2 * action_dim {
            return Err(ReqError::shape(
                "GaussianPolicy",
                "trunk output",
                2 * action_dim,
                net.spec().output,
            ));
        }
        Ok(GaussianPolicy { net, action_dim })
    }

    fn set_stddev_bias(&mut self, stddev: f64) -> Result<()> {
        if stddev <= min_stddev() {
            return Err(ReqError::Config(format!(
                "initial stddev must exceed {}",
                min_stddev()
            )));
        }
        let last = format!("layer{}.bias", self.net.spec().hidden.len());
        let bias = self
            .net
            .params_mut()
            .by_name_mut(&last)
            .expect("output bias exists");
        let raw = softplus_inverse(stddev - min_stddev());
        let a = self.action_dim;
        bias.values_mut()[a..].fill(raw);
        Ok(())
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.net.spec().input
    }

    pub fn distribution(&self, state: &[f64]) -> Result<GaussianParams> {
        ensure_finite("policy state", state)?;
        let batch = self.batch(&NumArray::matrix(1, state.len(), state.to_vec())?)?;
        Ok(batch.get(0))
    }

    pub fn batch(&self, states: &NumArray) -> Result<GaussianBatch> {
        let out = self.net.forward(states)?;
        Ok(self.split_head(&out).0)
    }

    pub fn batch_cached(&self, states: &NumArray) -> Result<(GaussianBatch, PolicyCache)> {
        let (out, trunk) = self.net.forward_cached(states)?;
        let (batch, raw_std) = self.split_head(&out);
        Ok((batch, PolicyCache { trunk, raw_std }))
    }

    fn split_head(&self, out: &NumArray) -> (GaussianBatch, Vec<f64>) {
        let a = self.action_dim;
        let rows = out.rows();
        let mut mean = Vec::with_capacity(rows * a);
        let mut stddev = Vec::with_capacity(rows * a);
        let mut raw_std = Vec::with_capacity(rows * a);
        let floor = min_stddev();
        for r in 0..rows {
            let row = out.row(r);
            mean.extend_from_slice(&row[..a]);
            for &raw in &row[a..] {
                raw_std.push(raw);
                stddev.push(softplus(raw) + floor);
            }
        }
        let batch = GaussianBatch {
            mean: NumArray::matrix(rows, a, mean).expect("sized above"),
            stddev: NumArray::matrix(rows, a, stddev).expect("sized above"),
        };
        (batch, raw_std)
    }

    /// Parameter gradients given loss gradients w.r.t. the batch means and
    /// standard deviations.
    pub fn backward(
        &self,
        cache: &PolicyCache,
        d_mean: &NumArray,
        d_std: &NumArray,
    ) -> Result<Gradients> {
        let a = self.action_dim;
        let rows = cache.trunk.rows();
        if d_mean.rows() != rows
            || d_std.rows() != rows
            || d_mean.last_dim() != a
            || d_std.last_dim() != a
        {
            return Err(ReqError::shape(
                "GaussianPolicy::backward",
                "gradient rows",
                rows,
                d_mean.rows(),
            ));
        }
        let mut upstream = Vec::with_capacity(rows * 2 * a);
        for r in 0..rows {
            upstream.extend_from_slice(d_mean.row(r));
            for (j, &ds) in d_std.row(r).iter().enumerate() {
                upstream.push(ds * sigmoid(cache.raw_std[r * a + j]));
            }
        }
        self.net
            .backward(&cache.trunk, &NumArray::matrix(rows, 2 * a, upstream)?)
    }
}
