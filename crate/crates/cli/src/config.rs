//! `key = value` settings shared by every subcommand.
//!
//! Defaults are overridden by a config file, which is overridden by `--set`
//! pairs and dedicated flags.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use hybrid_cartpole::agent::{Hyperparams, StepRule};
use hybrid_cartpole::dynamics::PlantMode;
use hybrid_cartpole::emulator::{Clock, EmulatorConfig};
use hybrid_cartpole::protocol::Dialect;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub emulator: EmulatorConfig,
    pub hyper: Hyperparams,
    pub seed: u64,
    pub dialect: Dialect,
    pub virtual_time: bool,
    pub speed: f64,
    pub jitter: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            emulator: EmulatorConfig::default(),
            hyper: Hyperparams::default(),
            seed: 0,
            dialect: Dialect::Extension,
            virtual_time: false,
            speed: 1.0,
            jitter: 0.0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Input(format!("bad value for {key}: {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(CliError::Input(format!("bad value for {key}: {value:?}"))),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let e = &mut self.emulator;
        let h = &mut self.hyper;
        match key {
            "seed" => self.seed = parse(key, value)?,
            "dialect" => {
                self.dialect = match value {
                    "strict" => Dialect::Strict,
                    "extension" => Dialect::Extension,
                    _ => return Err(CliError::Input(format!("unknown dialect {value:?}"))),
                }
            }
            "virtual_time" => self.virtual_time = parse_bool(key, value)?,
            "speed" => self.speed = parse(key, value)?,
            "jitter" => self.jitter = parse(key, value)?,

            "dt" => e.dt = parse(key, value)?,
            "accel_amplitude" => e.accel_amplitude = parse(key, value)?,
            "quantize_decimals" => e.quantize_decimals = parse(key, value)?,
            "noise_sigma" => e.noise_sigma = parse(key, value)?,
            "phi0_max" => e.phi0_max = parse(key, value)?,
            "machine_units" => e.machine_units = parse_bool(key, value)?,
            "g" => e.plant.g = parse(key, value)?,
            "cart_mass" => e.plant.cart_mass = parse(key, value)?,
            "bob_mass" => e.plant.bob_mass = parse(key, value)?,
            "beta_x" => e.plant.beta_x = parse(key, value)?,
            "beta_phi" => e.plant.beta_phi = parse(key, value)?,
            "x_max" => e.plant.x_max = parse(key, value)?,
            "phi_max" => e.plant.phi_max = parse(key, value)?,
            "mode" => {
                e.plant.mode = match value {
                    "simplified" => PlantMode::Simplified,
                    "full" => PlantMode::Full,
                    _ => return Err(CliError::Input(format!("unknown plant mode {value:?}"))),
                }
            }

            "gamma" => h.gamma = parse(key, value)?,
            "alpha" => h.alpha = parse(key, value)?,
            "alpha_decay" => h.alpha_decay = parse(key, value)?,
            "epsilon" => h.epsilon = parse(key, value)?,
            "epsilon_decay_t" => h.epsilon_decay_t = parse(key, value)?,
            "epsilon_decay_m" => h.epsilon_decay_m = parse(key, value)?,
            "rbf_exemplars" => h.rbf_exemplars = parse(key, value)?,
            "rbf_gamma_count" => h.rbf_gamma_count = parse(key, value)?,
            "rbf_gamma_min" => h.rbf_gamma_min = parse(key, value)?,
            "rbf_gamma_max" => h.rbf_gamma_max = parse(key, value)?,
            "impulse_ms" => h.impulse_ms = parse(key, value)?,
            "probe" => h.probe = parse(key, value)?,
            "reward_per_step" => h.reward_per_step = parse(key, value)?,
            "max_steps" => h.max_steps = parse(key, value)?,
            "step_rule" => {
                h.step_rule = match value {
                    "plain" => StepRule::Plain,
                    "normalized" => StepRule::Normalized,
                    _ => return Err(CliError::Input(format!("unknown step rule {value:?}"))),
                }
            }
            _ => return Err(CliError::Input(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    /// Applies a `key=value` pair as given on the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("expected key=value, got {pair:?}")))?;
        self.set(k.trim(), v.trim())
    }

    /// Applies every setting in `text`. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.set_pair(line)
                .map_err(|e| CliError::Input(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    /// Emulator settings with the clock and seed folded in.
    pub fn emulator_config(&self) -> Result<EmulatorConfig, CliError> {
        let mut e = self.emulator.clone();
        e.seed = self.seed;
        e.clock = if self.virtual_time {
            Clock::Virtual
        } else {
            Clock::Realtime { speed: self.speed, jitter: self.jitter }
        };
        e.validate().map_err(|err| CliError::Input(err.to_string()))?;
        Ok(e)
    }

    pub fn hyperparams(&self) -> Result<Hyperparams, CliError> {
        self.hyper.validate().map_err(|err| CliError::Input(err.to_string()))?;
        Ok(self.hyper.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_pairs() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\n\nseed = 7\nx_max=2.4 # wider track\nstep_rule = plain\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.emulator.plant.x_max, 2.4);
        assert_eq!(c.hyper.step_rule, StepRule::Plain);
        c.set_pair("seed=9").unwrap();
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn errors_name_the_line() {
        let mut c = RunConfig::default();
        let err = c.apply_text("seed=1\ngamma=lots\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(c.set_pair("nonsense").is_err());
        assert!(c.set_pair("colour=blue").is_err());
    }

    #[test]
    fn clock_selection() {
        let mut c = RunConfig { seed: 3, ..RunConfig::default() };
        assert!(matches!(c.emulator_config().unwrap().clock, Clock::Realtime { .. }));
        c.virtual_time = true;
        let e = c.emulator_config().unwrap();
        assert_eq!(e.clock, Clock::Virtual);
        assert_eq!(e.seed, 3);
    }
}
