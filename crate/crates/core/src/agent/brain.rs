use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{FeatureMap, STATE_DIM};
use super::regressor::{OnlineRegressor, StepSchedule};
use super::{AgentError, Hyperparams};
use crate::protocol::Action;

/// Identifies brain files.
pub const BRAIN_FORMAT: &str = "hybrid-cartpole-brain";
pub const BRAIN_VERSION: u32 = 1;

/// Everything the learner knows: the feature map and one Q regressor per
/// action.
#[derive(Debug, Clone, PartialEq)]
pub struct Brain {
    hyper: Hyperparams,
    features: FeatureMap,
    regressors: [OnlineRegressor; 2],
    episodes_trained: u64,
}

/// On-disk layout, in field order.
#[derive(Serialize, Deserialize)]
struct BrainFile {
    format: String,
    version: u32,
    episodes_trained: u64,
    hyperparams: Hyperparams,
    feature_map: FeatureMap,
    regressors: Vec<OnlineRegressor>,
}

impl Brain {
    /// Fresh brain with zero weights and a feature map drawn from `seed`.
    pub fn new(hyper: Hyperparams, seed: u64) -> Result<Self, AgentError> {
        let features = FeatureMap::new(&hyper, seed)?;
        Ok(Self::with_features(hyper, features))
    }

    /// Fresh brain on a given feature map.
    pub fn with_features(hyper: Hyperparams, features: FeatureMap) -> Self {
        let schedule = StepSchedule { alpha: hyper.alpha, decay: hyper.alpha_decay };
        let dim = features.dim();
        let r = OnlineRegressor::new(dim, schedule, hyper.step_rule);
        Self { hyper, features, regressors: [r.clone(), r], episodes_trained: 0 }
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn regressor(&self, action: Action) -> &OnlineRegressor {
        &self.regressors[action.index()]
    }

    pub fn regressor_mut(&mut self, action: Action) -> &mut OnlineRegressor {
        &mut self.regressors[action.index()]
    }

    pub fn episodes_trained(&self) -> u64 {
        self.episodes_trained
    }

    pub(crate) fn finish_episode(&mut self) {
        self.episodes_trained += 1;
    }

    /// Step size of the most recently updated regressor.
    pub fn current_step_size(&self) -> f64 {
        let r = self.regressors.iter().max_by_key(|r| r.updates()).expect("two regressors");
        r.step_size()
    }

    pub fn predict_q(&self, s: &[f64; STATE_DIM], action: Action) -> Result<f64, AgentError> {
        let f = self.features.transform(s)?;
        Ok(self.regressor(action).predict(&f))
    }

    /// Q-values of both actions for already transformed features.
    pub fn q_values(&self, features: &[f64]) -> [f64; 2] {
        [self.regressors[0].predict(features), self.regressors[1].predict(features)]
    }

    /// Regression target for a transition.
    pub fn target(&self, reward: f64, next: Option<&[f64]>) -> f64 {
        match next {
            None => reward,
            Some(f) => {
                let [q0, q1] = self.q_values(f);
                reward + self.hyper.gamma * q0.max(q1)
            }
        }
    }

    /// One Q-learning update. `next` holds the next state's features, or
    /// `None` when the next state is terminal. Returns the target.
    pub fn learn(
        &mut self,
        features: &[f64],
        action: Action,
        reward: f64,
        next: Option<&[f64]>,
    ) -> Result<f64, AgentError> {
        let target = self.target(reward, next);
        self.regressors[action.index()].partial_fit(features, target)?;
        Ok(target)
    }

    /// [`Brain::learn`] on raw states.
    pub fn q_update(
        &mut self,
        s: &[f64; STATE_DIM],
        action: Action,
        reward: f64,
        s_next: &[f64; STATE_DIM],
        terminal: bool,
    ) -> Result<f64, AgentError> {
        let f = self.features.transform(s)?;
        let next = if terminal { None } else { Some(self.features.transform(s_next)?) };
        self.learn(&f, action, reward, next.as_deref())
    }

    /// Greedy action for transformed features; ties go to action 0.
    pub fn greedy(&self, features: &[f64]) -> Action {
        let [q0, q1] = self.q_values(features);
        if q1 > q0 {
            Action::One
        } else {
            Action::Zero
        }
    }

    /// Epsilon-greedy choice over transformed features.
    pub fn choose<R: Rng + ?Sized>(&self, features: &[f64], eps: f64, rng: &mut R) -> Action {
        if eps > 0.0 && rng.random::<f64>() < eps {
            if rng.random::<bool>() {
                Action::One
            } else {
                Action::Zero
            }
        } else {
            self.greedy(features)
        }
    }

    pub fn choose_action<R: Rng + ?Sized>(
        &self,
        s: &[f64; STATE_DIM],
        eps: f64,
        rng: &mut R,
    ) -> Result<Action, AgentError> {
        let f = self.features.transform(s)?;
        Ok(self.choose(&f, eps, rng))
    }

    pub fn to_json(&self) -> Result<String, AgentError> {
        let file = BrainFile {
            format: BRAIN_FORMAT.into(),
            version: BRAIN_VERSION,
            episodes_trained: self.episodes_trained,
            hyperparams: self.hyper.clone(),
            feature_map: self.features.clone(),
            regressors: self.regressors.to_vec(),
        };
        serde_json::to_string(&file).map_err(|e| AgentError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, AgentError> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let header: Header =
            serde_json::from_str(text).map_err(|e| AgentError::Format(e.to_string()))?;
        if header.format != BRAIN_FORMAT {
            return Err(AgentError::Format(format!("not a brain file: {:?}", header.format)));
        }
        if header.version != BRAIN_VERSION {
            return Err(AgentError::Version { found: header.version, expected: BRAIN_VERSION });
        }
        let file: BrainFile =
            serde_json::from_str(text).map_err(|e| AgentError::Format(e.to_string()))?;
        file.hyperparams.validate()?;
        file.feature_map.check()?;
        let [a, b]: [OnlineRegressor; 2] = file
            .regressors
            .try_into()
            .map_err(|_| AgentError::Format("expected exactly two regressors".into()))?;
        a.check(file.feature_map.dim())?;
        b.check(file.feature_map.dim())?;
        Ok(Self {
            hyper: file.hyperparams,
            features: file.feature_map,
            regressors: [a, b],
            episodes_trained: file.episodes_trained,
        })
    }
}

/// Writes the brain atomically: a sibling temp file is renamed over `path`.
pub fn save_brain(brain: &Brain, path: &Path) -> Result<(), AgentError> {
    let text = brain.to_json()?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.write_all(b"\n")?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_brain(path: &Path) -> Result<Brain, AgentError> {
    let text = fs::read_to_string(path)?;
    Brain::from_json(&text)
}
