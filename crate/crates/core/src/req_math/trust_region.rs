use serde::{Deserialize, Serialize};

/// Lagrange multipliers for the decoupled prior trust region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrustRegionState {
    /// Budget on the mean part of `KL(prior || target prior)`.
    pub epsilon_mean: f64,
    /// Budget on the covariance part.
    pub epsilon_cov: f64,
    pub alpha_mean: f64,
    pub alpha_cov: f64,
    /// Dual ascent step size for both multipliers.
    pub lr: f64,
}

impl Default for TrustRegionState {
    fn default() -> Self {
        TrustRegionState {
            epsilon_mean: 0.01,
            epsilon_cov: 1e-5,
            alpha_mean: 0.0,
            alpha_cov: 0.0,
            lr: 0.01,
        }
    }
}

/// Projected dual ascent: `alpha <- max(0, alpha + lr * (kl - eps))`.
pub fn trust_region_update(state: TrustRegionState, kl_mean: f64, kl_cov: f64) -> TrustRegionState {
    TrustRegionState {
        alpha_mean: (state.alpha_mean + state.lr * (kl_mean - state.epsilon_mean)).max(0.0),
        alpha_cov: (state.alpha_cov + state.lr * (kl_cov - state.epsilon_cov)).max(0.0),
        ..state
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slack_constraint_keeps_zero_multiplier() {
        let s = trust_region_update(TrustRegionState::default(), 0.001, 0.0);
        assert_eq!(s.alpha_mean, 0.0);
        assert_eq!(s.alpha_cov, 0.0);
    }

    #[test]
    fn violation_increases_multiplier() {
        let s = trust_region_update(TrustRegionState::default(), 0.5, 0.1);
        assert!(s.alpha_mean > 0.0 && s.alpha_cov > 0.0);
    }

    #[test]
    fn constant_violation_grows_linearly() {
        let mut s = TrustRegionState {
            lr: 0.1,
            ..TrustRegionState::default()
        };
        let margin = 0.3;
        for k in 1..=10 {
            s = trust_region_update(s, s.epsilon_mean + margin, s.epsilon_cov + margin);
            assert!((s.alpha_mean - k as f64 * 0.1 * margin).abs() < 1e-12);
            assert!((s.alpha_cov - k as f64 * 0.1 * margin).abs() < 1e-12);
        }
    }
}
