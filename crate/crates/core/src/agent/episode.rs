use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;

use super::brain::{save_brain, Brain};
use super::{epsilon_schedule, AgentError};
use crate::dynamics::{is_terminal, PlantParams, SimState};
use crate::protocol::{ClientError, HybridLink};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeMode {
    Learn,
    Exploit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOutcome {
    /// Transitions that did not end in a terminal state.
    pub steps: u64,
    pub reward: f64,
    /// Q updates applied (one per transition in learn mode).
    pub updates: u64,
    /// False when the episode was cut off at the step limit.
    pub terminal: bool,
}

pub(crate) fn observed_terminal(s: &[f64; 4], bounds: &PlantParams) -> bool {
    is_terminal(&SimState::new(s[0], s[1], s[2], s[3]), bounds)
}

/// Runs one episode: Initial Condition, Operate, then act until the sampled
/// state leaves `bounds` or `max_steps` transitions survive, then Halt.
///
/// `before_step` runs before each action with the number of steps survived so
/// far; use it to inject disturbances.
pub fn run_episode<L, R, H>(
    link: &mut L,
    brain: &mut Brain,
    mode: EpisodeMode,
    eps: f64,
    rng: &mut R,
    bounds: &PlantParams,
    mut before_step: H,
) -> Result<EpisodeOutcome, AgentError>
where
    L: HybridLink + ?Sized,
    R: Rng + ?Sized,
    H: FnMut(u64, &mut L) -> Result<(), ClientError>,
{
    let hyper = brain.hyper().clone();
    let eps = if mode == EpisodeMode::Exploit { 0.0 } else { eps };
    let mut out = EpisodeOutcome { steps: 0, reward: 0.0, updates: 0, terminal: true };

    link.initial_condition()?;
    link.operate()?;
    let mut s = link.sim_state()?;
    if observed_terminal(&s, bounds) {
        link.halt()?;
        return Ok(out);
    }
    let mut f = brain.features().transform(&s)?;
    let mut f_next = vec![0.0; f.len()];
    loop {
        before_step(out.steps, link)?;
        let action = brain.choose(&f, eps, rng);
        link.influence(action, hyper.impulse_ms)?;
        let s_next = link.sim_state()?;
        let terminal = observed_terminal(&s_next, bounds);
        let reward = if terminal { 0.0 } else { hyper.reward_per_step };
        if !terminal {
            brain.features().transform_into(&s_next, &mut f_next)?;
        }
        if mode == EpisodeMode::Learn {
            let next = if terminal { None } else { Some(f_next.as_slice()) };
            brain.learn(&f, action, reward, next)?;
            out.updates += 1;
        }
        if terminal {
            break;
        }
        out.steps += 1;
        out.reward += reward;
        if hyper.max_steps > 0 && out.steps >= hyper.max_steps {
            out.terminal = false;
            break;
        }
        s = s_next;
        std::mem::swap(&mut f, &mut f_next);
    }
    let _ = s;
    link.halt()?;
    Ok(out)
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeMetrics {
    /// Zero-based over the brain's whole life, so resumed runs continue it.
    pub episode: u64,
    pub steps: u64,
    pub reward: f64,
    pub epsilon: f64,
    /// Step size after the episode.
    pub eta: f64,
}

pub const METRICS_HEADER: &str = "episode,steps,reward,epsilon,eta";

impl EpisodeMetrics {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.episode, self.steps, self.reward, self.epsilon, self.eta)
    }
}

/// Where snapshot `episodes` of a run saving its final brain to `path` goes:
/// `brain.json` becomes `brain.ep10.json`.
pub fn snapshot_path(path: &Path, episodes: u64) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.ep{episodes}.{}", ext.to_string_lossy()),
        None => format!("{stem}.ep{episodes}"),
    };
    path.with_file_name(name)
}

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Final brain destination; snapshots go next to it.
    pub brain_path: Option<&'a Path>,
    /// CSV sink; the header is written first.
    pub metrics: Option<&'a mut dyn Write>,
}

/// Runs `episodes` learning episodes. Snapshots are written every
/// `hyper.probe` episodes of this run and the final brain at the end.
pub fn train<L, R>(
    link: &mut L,
    brain: &mut Brain,
    episodes: u64,
    rng: &mut R,
    bounds: &PlantParams,
    mut options: TrainOptions<'_>,
    mut on_episode: impl FnMut(&EpisodeMetrics),
) -> Result<Vec<EpisodeMetrics>, AgentError>
where
    L: HybridLink + ?Sized,
    R: Rng + ?Sized,
{
    if episodes == 0 {
        return Err(AgentError::InvalidHyperparams("episodes must be >= 1"));
    }
    if let Some(w) = options.metrics.as_mut() {
        writeln!(w, "{METRICS_HEADER}")?;
    }
    let probe = brain.hyper().probe;
    let mut log = Vec::with_capacity(episodes as usize);
    for i in 1..=episodes {
        let k = brain.episodes_trained();
        let eps = epsilon_schedule(brain.hyper(), k);
        let out = run_episode(link, brain, EpisodeMode::Learn, eps, rng, bounds, |_, _| Ok(()))?;
        brain.finish_episode();
        let m = EpisodeMetrics {
            episode: k,
            steps: out.steps,
            reward: out.reward,
            epsilon: eps,
            eta: brain.current_step_size(),
        };
        if let Some(w) = options.metrics.as_mut() {
            writeln!(w, "{}", m.csv_row())?;
        }
        on_episode(&m);
        log.push(m);
        if let Some(path) = options.brain_path {
            if probe > 0 && i % probe == 0 {
                save_brain(brain, &snapshot_path(path, i))?;
            }
        }
    }
    if let Some(w) = options.metrics.as_mut() {
        w.flush()?;
    }
    if let Some(path) = options.brain_path {
        save_brain(brain, path)?;
    }
    Ok(log)
}

/// Median of the `steps` column, averaging the middle pair for even counts.
pub fn median_steps(rows: &[EpisodeMetrics]) -> f64 {
    let mut v: Vec<u64> = rows.iter().map(|m| m.steps).collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}
