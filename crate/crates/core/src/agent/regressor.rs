use serde::{Deserialize, Serialize};

use super::hyper::StepRule;
use super::AgentError;

/// Step size `alpha * t^(-decay)` at update `t >= 1`; `alpha` before any update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub alpha: f64,
    pub decay: f64,
}

impl StepSchedule {
    pub fn at(&self, t: u64) -> f64 {
        if t == 0 {
            self.alpha
        } else {
            self.alpha * (t as f64).powf(-self.decay)
        }
    }
}

/// Linear model `y = intercept + weights . f` trained one sample at a time by
/// squared-error gradient descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineRegressor {
    weights: Vec<f64>,
    intercept: f64,
    updates: u64,
    schedule: StepSchedule,
    rule: StepRule,
}

impl OnlineRegressor {
    /// Zero-initialized model over `dim` features.
    pub fn new(dim: usize, schedule: StepSchedule, rule: StepRule) -> Self {
        Self { weights: vec![0.0; dim], intercept: 0.0, updates: 0, schedule, rule }
    }

    pub fn from_parts(weights: Vec<f64>, intercept: f64, schedule: StepSchedule, rule: StepRule) -> Self {
        Self { weights, intercept, updates: 0, schedule, rule }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn set_intercept(&mut self, intercept: f64) {
        self.intercept = intercept;
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn schedule(&self) -> StepSchedule {
        self.schedule
    }

    pub fn rule(&self) -> StepRule {
        self.rule
    }

    /// Step size of the most recent update (`alpha` before the first).
    pub fn step_size(&self) -> f64 {
        self.schedule.at(self.updates)
    }

    pub fn predict(&self, features: &[f64]) -> f64 {
        debug_assert_eq!(features.len(), self.weights.len());
        self.intercept + dot(&self.weights, features)
    }

    /// One gradient step towards `target`. Returns the step size used.
    pub fn partial_fit(&mut self, features: &[f64], target: f64) -> Result<f64, AgentError> {
        if !target.is_finite() || !features.iter().all(|v| v.is_finite()) {
            return Err(AgentError::NonFinite("regression sample"));
        }
        if features.len() != self.weights.len() {
            return Err(AgentError::Format(format!(
                "expected {} features, got {}",
                self.weights.len(),
                features.len()
            )));
        }
        self.updates += 1;
        let eta = self.schedule.at(self.updates);
        let error = self.predict(features) - target;
        let gain = match self.rule {
            StepRule::Plain => eta,
            StepRule::Normalized => eta / (1.0 + dot(features, features)),
        };
        let g = gain * error;
        self.intercept -= g;
        for (w, f) in self.weights.iter_mut().zip(features) {
            *w -= g * f;
        }
        Ok(eta)
    }

    pub(crate) fn check(&self, dim: usize) -> Result<(), AgentError> {
        if self.weights.len() != dim {
            return Err(AgentError::Format("regressor dimension disagrees with feature map".into()));
        }
        if !self.intercept.is_finite() || !self.weights.iter().all(|w| w.is_finite()) {
            return Err(AgentError::Format("regressor holds non-finite weights".into()));
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
