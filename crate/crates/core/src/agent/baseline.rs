use rand::Rng;

use super::episode::observed_terminal;
use super::AgentError;
use crate::dynamics::PlantParams;
use crate::protocol::{Action, HybridLink};

/// Bang-bang controller: push with action 1 when `theta . s > 0`, else 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPolicy {
    pub theta: [f64; 4],
}

impl LinearPolicy {
    pub fn act(&self, s: &[f64; 4]) -> Action {
        let z: f64 = self.theta.iter().zip(s).map(|(a, b)| a * b).sum();
        if z > 0.0 {
            Action::One
        } else {
            Action::Zero
        }
    }

    pub fn to_line(&self) -> String {
        let [a, b, c, d] = self.theta;
        format!("{a} {b} {c} {d}")
    }

    pub fn parse(text: &str) -> Result<Self, AgentError> {
        let values: Vec<f64> = text
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| AgentError::Format(format!("bad theta: {e}")))?;
        let theta: [f64; 4] = values
            .try_into()
            .map_err(|_| AgentError::Format("theta needs exactly four numbers".into()))?;
        if !theta.iter().all(|v| v.is_finite()) {
            return Err(AgentError::NonFinite("theta"));
        }
        Ok(Self { theta })
    }
}

/// Survived steps of one episode under `policy`, counted like
/// [`run_episode`](super::run_episode).
pub fn run_policy_episode<L: HybridLink + ?Sized>(
    link: &mut L,
    policy: &LinearPolicy,
    impulse_ms: u32,
    max_steps: u64,
    bounds: &PlantParams,
) -> Result<u64, AgentError> {
    link.initial_condition()?;
    link.operate()?;
    let mut s = link.sim_state()?;
    let mut steps = 0;
    if !observed_terminal(&s, bounds) {
        loop {
            link.influence(policy.act(&s), impulse_ms)?;
            s = link.sim_state()?;
            if observed_terminal(&s, bounds) {
                break;
            }
            steps += 1;
            if max_steps > 0 && steps >= max_steps {
                break;
            }
        }
    }
    link.halt()?;
    Ok(steps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub best: LinearPolicy,
    pub best_steps: u64,
    /// Episode length of every candidate, in sampling order.
    pub evaluated: Vec<u64>,
}

/// Samples `tries` policies with `theta` uniform in `[-1, 1]^4`, runs one
/// episode each, and keeps the first one with the longest episode.
pub fn random_search_baseline<L, R>(
    link: &mut L,
    tries: u64,
    rng: &mut R,
    impulse_ms: u32,
    max_steps: u64,
    bounds: &PlantParams,
    mut on_try: impl FnMut(u64, &LinearPolicy, u64),
) -> Result<BaselineResult, AgentError>
where
    L: HybridLink + ?Sized,
    R: Rng + ?Sized,
{
    if tries == 0 {
        return Err(AgentError::InvalidHyperparams("tries must be >= 1"));
    }
    let mut best: Option<(LinearPolicy, u64)> = None;
    let mut evaluated = Vec::with_capacity(tries as usize);
    for i in 0..tries {
        let mut theta = [0.0; 4];
        for t in &mut theta {
            *t = rng.random_range(-1.0..=1.0);
        }
        let policy = LinearPolicy { theta };
        let steps = run_policy_episode(link, &policy, impulse_ms, max_steps, bounds)?;
        on_try(i, &policy, steps);
        evaluated.push(steps);
        if best.is_none_or(|(_, s)| steps > s) {
            best = Some((policy, steps));
        }
    }
    let (best, best_steps) = best.expect("tries >= 1");
    Ok(BaselineResult { best, best_steps, evaluated })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_sign() {
        let p = LinearPolicy { theta: [0.0, 0.0, 1.0, 0.0] };
        assert_eq!(p.act(&[0.0, 0.0, 0.1, 0.0]), Action::One);
        assert_eq!(p.act(&[0.0, 0.0, -0.1, 0.0]), Action::Zero);
        assert_eq!(p.act(&[0.0; 4]), Action::Zero);
    }

    #[test]
    fn theta_text_round_trip() {
        let p = LinearPolicy { theta: [0.125, -0.5, 1.0, 0.3333333333333333] };
        assert_eq!(LinearPolicy::parse(&p.to_line()).unwrap(), p);
        assert_eq!(LinearPolicy::parse("1,2,3,4").unwrap().theta, [1.0, 2.0, 3.0, 4.0]);
        assert!(LinearPolicy::parse("1 2 3").is_err());
        assert!(LinearPolicy::parse("1 2 x 4").is_err());
    }
}
