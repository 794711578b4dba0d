//! Q-learning agent.
//!
//! `Q(s, a)` is one linear regressor per action over random Fourier features
//! of the raw state. The regressors' own decaying step size plays the role of
//! the learning rate, so the update is a single gradient step towards
//! `r + gamma * max_a' Q(s', a')` (or `r` at a terminal state).

mod baseline;
mod brain;
mod episode;
mod features;
mod hyper;
mod regressor;

use std::io;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use baseline::{random_search_baseline, run_policy_episode, BaselineResult, LinearPolicy};
pub use brain::{load_brain, save_brain, Brain, BRAIN_FORMAT, BRAIN_VERSION};
pub use episode::{
    median_steps, run_episode, snapshot_path, train, EpisodeMetrics, EpisodeMode, EpisodeOutcome,
    TrainOptions, METRICS_HEADER,
};
pub use features::{linspace, ExactRbf, FeatureMap, STATE_DIM};
pub use hyper::{epsilon_schedule, Hyperparams, StepRule};
pub use regressor::{OnlineRegressor, StepSchedule};

use crate::protocol::ClientError;

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("link failed: {0}")]
    Client(#[from] ClientError),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(&'static str),
    #[error("malformed brain: {0}")]
    Format(String),
    #[error("brain file version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Generator for exploration draws, independent of the feature map stream.
pub fn exploration_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}
