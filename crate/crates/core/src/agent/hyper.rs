use serde::{Deserialize, Serialize};

use super::AgentError;

/// Tunable constants of the learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Discount factor.
    pub gamma: f64,
    /// Initial step size of the regressors.
    pub alpha: f64,
    /// Exponent of the inverse-scaling step-size decay.
    pub alpha_decay: f64,
    /// Initial exploration probability.
    pub epsilon: f64,
    pub epsilon_decay_t: f64,
    pub epsilon_decay_m: f64,
    /// Random Fourier features per kernel width.
    pub rbf_exemplars: usize,
    /// Number of kernel widths.
    pub rbf_gamma_count: usize,
    pub rbf_gamma_min: f64,
    pub rbf_gamma_max: f64,
    /// Length of one push.
    pub impulse_ms: u32,
    /// Save a brain snapshot every this many episodes; 0 disables snapshots.
    pub probe: u64,
    pub reward_per_step: f64,
    /// Episodes are cut off after this many steps; 0 means no limit.
    pub max_steps: u64,
    pub step_rule: StepRule,
}

/// How the regressor turns the step size into a weight update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepRule {
    /// Plain gradient step `eta * error * f`.
    Plain,
    /// Gradient step divided by `1 + |f|^2`, so `eta` is the fraction of the
    /// error removed at the sample.
    #[default]
    Normalized,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.999,
            alpha: 0.6,
            alpha_decay: 0.1,
            epsilon: 0.5,
            epsilon_decay_t: 0.1,
            epsilon_decay_m: 10.0,
            rbf_exemplars: 250,
            rbf_gamma_count: 10,
            rbf_gamma_min: 0.05,
            rbf_gamma_max: 4.0,
            impulse_ms: 20,
            probe: 0,
            reward_per_step: 1.0,
            max_steps: 1000,
            step_rule: StepRule::default(),
        }
    }
}

impl Hyperparams {
    /// Total feature dimension.
    pub fn feature_count(&self) -> usize {
        self.rbf_exemplars * self.rbf_gamma_count
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |what| Err(AgentError::InvalidHyperparams(what));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(self.alpha_decay.is_finite() && self.alpha_decay >= 0.0) {
            return bad("alpha_decay must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon must lie in [0, 1]");
        }
        if !(self.epsilon_decay_t.is_finite() && self.epsilon_decay_t >= 0.0) {
            return bad("epsilon_decay_t must be >= 0");
        }
        if !(self.epsilon_decay_m.is_finite() && self.epsilon_decay_m > 0.0) {
            return bad("epsilon_decay_m must be > 0");
        }
        if self.rbf_exemplars == 0 || self.rbf_gamma_count == 0 {
            return bad("feature counts must be >= 1");
        }
        if !(self.rbf_gamma_min.is_finite() && self.rbf_gamma_min > 0.0) {
            return bad("rbf_gamma_min must be > 0");
        }
        if !(self.rbf_gamma_max.is_finite() && self.rbf_gamma_min <= self.rbf_gamma_max) {
            return bad("rbf_gamma_min must not exceed rbf_gamma_max");
        }
        if self.impulse_ms == 0 {
            return bad("impulse_ms must be >= 1");
        }
        if !self.reward_per_step.is_finite() {
            return bad("reward_per_step must be finite");
        }
        Ok(())
    }
}

/// Exploration probability for episode `k` (counted from zero):
/// `epsilon * (1 + k / m)^(-t)`.
pub fn epsilon_schedule(hyper: &Hyperparams, k: u64) -> f64 {
    hyper.epsilon * (1.0 + k as f64 / hyper.epsilon_decay_m).powf(-hyper.epsilon_decay_t)
}
