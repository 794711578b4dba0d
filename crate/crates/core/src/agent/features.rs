//! State features for the linear value function.
//!
//! Each kernel width `w` gets a block of `n` random Fourier features
//! `sqrt(2/n) * cos(omega . s + b)` with `omega ~ Normal(0, 2w)` per
//! coordinate and `b ~ Uniform[0, 2pi)`. The inner product of two blocks is a
//! Monte Carlo estimate of the Gaussian kernel `exp(-w |x - y|^2)`. Blocks for
//! `rbf_gamma_count` widths spaced evenly from `rbf_gamma_min` to
//! `rbf_gamma_max` are concatenated.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{AgentError, Hyperparams};

/// Dimension of the observed state `(x, x_dot, phi, phi_dot)`.
pub const STATE_DIM: usize = 4;

/// `count` evenly spaced values from `min` to `max` inclusive; a single value
/// is `min`.
pub fn linspace(min: f64, max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![min],
        _ => {
            let step = (max - min) / (count - 1) as f64;
            (0..count)
                .map(|i| if i == count - 1 { max } else { min + step * i as f64 })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    seed: u64,
    exemplars: usize,
    widths: Vec<f64>,
    /// One row per feature, blocks in width order.
    frequencies: Vec<[f64; STATE_DIM]>,
    phases: Vec<f64>,
}

impl FeatureMap {
    pub fn new(hyper: &Hyperparams, seed: u64) -> Result<Self, AgentError> {
        hyper.validate()?;
        let widths = linspace(hyper.rbf_gamma_min, hyper.rbf_gamma_max, hyper.rbf_gamma_count);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let n = hyper.rbf_exemplars;
        let mut frequencies = Vec::with_capacity(n * widths.len());
        let mut phases = Vec::with_capacity(n * widths.len());
        for &w in &widths {
            let sd = (2.0 * w).sqrt();
            for _ in 0..n {
                let mut row = [0.0; STATE_DIM];
                for c in &mut row {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *c = sd * z;
                }
                frequencies.push(row);
                phases.push(rng.random_range(0.0..TAU));
            }
        }
        Ok(Self { seed, exemplars: n, widths, frequencies, phases })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn exemplars(&self) -> usize {
        self.exemplars
    }

    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    pub fn frequencies(&self) -> &[[f64; STATE_DIM]] {
        &self.frequencies
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Checks the invariants a deserialized map must satisfy.
    pub(crate) fn check(&self) -> Result<(), AgentError> {
        let m = self.exemplars * self.widths.len();
        if self.exemplars == 0 || self.frequencies.len() != m || self.phases.len() != m {
            return Err(AgentError::Format("feature map dimensions disagree".into()));
        }
        let finite = self.widths.iter().chain(&self.phases).all(|v| v.is_finite())
            && self.frequencies.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(AgentError::Format("feature map holds non-finite values".into()));
        }
        Ok(())
    }

    pub fn transform_into(&self, s: &[f64; STATE_DIM], out: &mut [f64]) -> Result<(), AgentError> {
        if !s.iter().all(|v| v.is_finite()) {
            return Err(AgentError::NonFinite("state"));
        }
        assert_eq!(out.len(), self.dim(), "output buffer has the wrong dimension");
        let scale = (2.0 / self.exemplars as f64).sqrt();
        for ((o, w), b) in out.iter_mut().zip(&self.frequencies).zip(&self.phases) {
            let proj = w[0] * s[0] + w[1] * s[1] + w[2] * s[2] + w[3] * s[3] + b;
            *o = scale * proj.cos();
        }
        Ok(())
    }

    pub fn transform(&self, s: &[f64; STATE_DIM]) -> Result<Vec<f64>, AgentError> {
        let mut out = vec![0.0; self.dim()];
        self.transform_into(s, &mut out)?;
        Ok(out)
    }

    /// Features of width block `block` only.
    pub fn block<'a>(&self, features: &'a [f64], block: usize) -> &'a [f64] {
        &features[block * self.exemplars..(block + 1) * self.exemplars]
    }
}

/// Gaussian RBFs on explicit centers, `exp(-(beta * |s - c|)^2)`.
///
/// The random Fourier map approximates a kernel with width `beta^2`; this is
/// the exact counterpart, kept for checking that approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactRbf {
    pub centers: Vec<[f64; STATE_DIM]>,
    pub beta: f64,
}

impl ExactRbf {
    pub fn transform(&self, s: &[f64; STATE_DIM]) -> Vec<f64> {
        self.centers
            .iter()
            .map(|c| {
                let d2: f64 = s.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                (-(self.beta * self.beta) * d2).exp()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_endpoints() {
        assert_eq!(linspace(0.05, 4.0, 1), vec![0.05]);
        let w = linspace(0.05, 4.0, 10);
        assert_eq!(w.len(), 10);
        assert_eq!(w[0], 0.05);
        assert_eq!(w[9], 4.0);
        assert!((w[1] - (0.05 + 3.95 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn default_map_has_2500_bounded_features() {
        let map = FeatureMap::new(&Hyperparams::default(), 1).unwrap();
        assert_eq!(map.dim(), 2500);
        let bound = (2.0f64 / 250.0).sqrt();
        let f = map.transform(&[0.3, -1.2, 0.1, 2.0]).unwrap();
        assert!(f.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn single_width_uses_minimum() {
        let h = Hyperparams { rbf_gamma_count: 1, ..Hyperparams::default() };
        let map = FeatureMap::new(&h, 1).unwrap();
        assert_eq!(map.widths(), &[0.05]);
        assert_eq!(map.dim(), 250);
    }

    #[test]
    fn seeding() {
        let h = Hyperparams::default();
        assert_eq!(FeatureMap::new(&h, 5).unwrap(), FeatureMap::new(&h, 5).unwrap());
        assert_ne!(FeatureMap::new(&h, 5).unwrap(), FeatureMap::new(&h, 6).unwrap());
    }

    #[test]
    fn non_finite_state_is_rejected() {
        let map = FeatureMap::new(&Hyperparams::default(), 1).unwrap();
        assert!(map.transform(&[f64::NAN, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn exact_rbf_is_one_at_center() {
        let rbf = ExactRbf { centers: vec![[0.1, 0.2, 0.3, 0.4], [0.0; 4]], beta: 0.7 };
        let y = rbf.transform(&[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(y[0], 1.0);
        assert!((y[1] - (-(0.49) * 0.3f64).exp()).abs() < 1e-15);
    }
}
