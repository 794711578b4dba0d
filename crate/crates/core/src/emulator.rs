//! Software stand-in for the analog computer running the pendulum program.
//!
//! The emulator owns one [`SimState`] and integrates it while the machine is
//! in [`MachineMode::Operate`]. Digital output 0 selects the push direction
//! and digital output 1 switches the push on. Element readouts go through the
//! same quantization and optional noise an analog readout would show.
//!
//! Time advances in one of two ways. With [`Clock::Virtual`] nothing moves
//! until [`Emulator::advance_time`] is called, which makes whole training runs
//! bit-reproducible. With [`Clock::Realtime`] the caller invokes
//! [`Emulator::catch_up`] before each command and the emulator integrates
//! however much wall-clock time passed since the previous command.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, DynamicsError, PlantParams, SimState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmulatorError {
    #[error("unknown element address {0}")]
    UnknownAddress(Address),
    #[error("no readout group defined")]
    NoReadoutGroup,
    #[error("invalid digital output channel {0}")]
    InvalidChannel(u8),
    #[error("{0}")]
    Usage(&'static str),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Four-digit computing element address such as `0223`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address([u8; 4]);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("address must be exactly four decimal digits")]
pub struct InvalidAddress;

impl Address {
    pub const CART_X: Address = Address(*b"0223");
    pub const CART_VELOCITY: Address = Address(*b"0222");
    pub const POLE_ANGLE: Address = Address(*b"0161");
    pub const POLE_VELOCITY: Address = Address(*b"0160");

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, InvalidAddress> {
        match bytes {
            [a, b, c, d] if bytes.iter().all(u8::is_ascii_digit) => Ok(Address([*a, *b, *c, *d])),
            _ => Err(InvalidAddress),
        }
    }

    pub fn as_bytes(&self) -> &[u8; 4] {
        &self.0
    }

    pub fn as_str(&self) -> &str {
        // Only ASCII digits are ever stored.
        std::str::from_utf8(&self.0).unwrap()
    }
}

impl FromStr for Address {
    type Err = InvalidAddress;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Address::from_bytes(s.as_bytes())
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MachineMode {
    InitialCondition,
    Operate,
    Halt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DigitalOutputs {
    /// Push direction: set means positive acceleration.
    pub d0: bool,
    /// Impulse: the push is applied while set.
    pub d1: bool,
}

/// A quantity the pendulum program exposes on a computing element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    CartPosition,
    CartVelocity,
    PoleAngle,
    PoleVelocity,
}

impl Quantity {
    fn of(self, s: &SimState) -> f64 {
        match self {
            Quantity::CartPosition => s.x,
            Quantity::CartVelocity => s.x_dot,
            Quantity::PoleAngle => s.phi,
            Quantity::PoleVelocity => s.phi_dot,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementAddressMap {
    entries: Vec<(Address, Quantity)>,
}

impl Default for ElementAddressMap {
    fn default() -> Self {
        Self {
            entries: vec![
                (Address::CART_X, Quantity::CartPosition),
                (Address::CART_VELOCITY, Quantity::CartVelocity),
                (Address::POLE_ANGLE, Quantity::PoleAngle),
                (Address::POLE_VELOCITY, Quantity::PoleVelocity),
            ],
        }
    }
}

impl ElementAddressMap {
    /// Fails on duplicate addresses.
    pub fn new(entries: Vec<(Address, Quantity)>) -> Result<Self, EmulatorError> {
        for (i, (a, _)) in entries.iter().enumerate() {
            if entries[..i].iter().any(|(b, _)| a == b) {
                return Err(EmulatorError::Usage("duplicate element address"));
            }
        }
        Ok(Self { entries })
    }

    pub fn lookup(&self, address: Address) -> Result<Quantity, EmulatorError> {
        self.entries
            .iter()
            .find(|(a, _)| *a == address)
            .map(|(_, q)| *q)
            .ok_or(EmulatorError::UnknownAddress(address))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Clock {
    /// Wall-clock paced. `speed` scales simulated seconds per real second;
    /// `jitter` adds a uniform random error of up to that many seconds to
    /// every catch-up interval.
    Realtime { speed: f64, jitter: f64 },
    /// Time moves only through [`Emulator::advance_time`].
    Virtual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulatorConfig {
    pub clock: Clock,
    pub dt: f64,
    /// Magnitude of the cart acceleration while digital output 1 is set.
    pub accel_amplitude: f64,
    pub quantize_decimals: u32,
    pub noise_sigma: f64,
    pub seed: u64,
    pub plant: PlantParams,
    pub phi0_max: f64,
    /// Clamp readouts to the machine-unit range `[-1, 1]`.
    pub machine_units: bool,
}

impl Default for EmulatorConfig {
    fn default() -> Self {
        Self {
            clock: Clock::Virtual,
            dt: 1e-3,
            accel_amplitude: 10.0,
            quantize_decimals: 4,
            noise_sigma: 0.0,
            seed: 0,
            plant: PlantParams::default(),
            phi0_max: 0.05,
            machine_units: false,
        }
    }
}

impl EmulatorConfig {
    pub fn validate(&self) -> Result<(), EmulatorError> {
        self.plant.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(EmulatorError::Usage("dt must be > 0"));
        }
        if !(self.accel_amplitude.is_finite() && self.accel_amplitude >= 0.0) {
            return Err(EmulatorError::Usage("accel_amplitude must be >= 0"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(EmulatorError::Usage("noise_sigma must be >= 0"));
        }
        if !(self.phi0_max.is_finite() && self.phi0_max >= 0.0) {
            return Err(EmulatorError::Usage("phi0_max must be >= 0"));
        }
        if self.quantize_decimals > 15 {
            return Err(EmulatorError::Usage("quantize_decimals must be <= 15"));
        }
        if let Clock::Realtime { speed, jitter } = self.clock {
            if !(speed.is_finite() && speed > 0.0 && jitter.is_finite() && jitter >= 0.0) {
                return Err(EmulatorError::Usage("realtime clock needs speed > 0, jitter >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Disturbance {
    magnitude: f64,
    remaining_steps: u64,
}

/// Rounds half away from zero to `decimals` places.
pub fn quantize(value: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (value * scale).round() / scale
}

/// Whole integration steps covering `duration`, rounded up.
fn steps_for(duration: f64, dt: f64) -> u64 {
    // Absorb the representation error of quotients like 0.02 / 0.001.
    let raw = duration / dt;
    let nearest = raw.round();
    if (raw - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as u64
    } else {
        raw.ceil() as u64
    }
}

#[derive(Debug, Clone)]
pub struct Emulator {
    config: EmulatorConfig,
    addresses: ElementAddressMap,
    state: SimState,
    mode: MachineMode,
    outputs: DigitalOutputs,
    group: Option<Vec<Address>>,
    disturbance: Option<Disturbance>,
    ic_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    applied_impulse: f64,
    last_sync: Option<Instant>,
    carry: f64,
}

impl Emulator {
    pub fn new(config: EmulatorConfig) -> Result<Self, EmulatorError> {
        config.validate()?;
        let (ic_rng, noise_rng) = seeded_streams(config.seed);
        let mut emu = Self {
            addresses: ElementAddressMap::default(),
            state: SimState::default(),
            mode: MachineMode::InitialCondition,
            outputs: DigitalOutputs::default(),
            group: None,
            disturbance: None,
            ic_rng,
            noise_rng,
            applied_impulse: 0.0,
            last_sync: None,
            carry: 0.0,
            config,
        };
        emu.set_mode(MachineMode::InitialCondition);
        Ok(emu)
    }

    pub fn with_addresses(mut self, addresses: ElementAddressMap) -> Self {
        self.addresses = addresses;
        self
    }

    pub fn config(&self) -> &EmulatorConfig {
        &self.config
    }

    pub fn mode(&self) -> MachineMode {
        self.mode
    }

    pub fn outputs(&self) -> DigitalOutputs {
        self.outputs
    }

    /// Exact, unquantized plant state.
    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn readout_group(&self) -> Option<&[Address]> {
        self.group.as_deref()
    }

    /// `∫ u dt` of the action input since the last initial condition,
    /// disturbances excluded.
    pub fn applied_impulse(&self) -> f64 {
        self.applied_impulse
    }

    /// Replaces both randomness streams, as if the emulator had been
    /// constructed with `seed`.
    /// The construction-time initial condition is drawn again and applied
    /// when the machine is in initial condition mode.
    pub fn reseed(&mut self, seed: u64) {
        self.config.seed = seed;
        (self.ic_rng, self.noise_rng) = seeded_streams(seed);
        let first = dynamics::initial_state(self.config.phi0_max, &mut self.ic_rng);
        if self.mode == MachineMode::InitialCondition {
            self.state = first;
            self.applied_impulse = 0.0;
        }
    }

    /// Test hook: overwrite the plant state, keeping the mode.
    pub fn set_state(&mut self, state: SimState) {
        self.state = state;
    }

    pub fn set_mode(&mut self, mode: MachineMode) {
        self.catch_up();
        match mode {
            MachineMode::InitialCondition => {
                self.state = dynamics::initial_state(self.config.phi0_max, &mut self.ic_rng);
                self.disturbance = None;
                self.applied_impulse = 0.0;
            }
            MachineMode::Operate | MachineMode::Halt => {}
        }
        self.mode = mode;
        self.last_sync = None;
        self.carry = 0.0;
        if mode == MachineMode::Operate {
            self.last_sync = Some(Instant::now());
        }
    }

    /// Clears the readout group and digital outputs and enters initial
    /// condition. Configuration is kept.
    pub fn reset(&mut self) {
        self.group = None;
        self.outputs = DigitalOutputs::default();
        self.set_mode(MachineMode::InitialCondition);
    }

    pub fn set_digital_output(&mut self, channel: u8, level: bool) -> Result<(), EmulatorError> {
        self.catch_up();
        match channel {
            0 => self.outputs.d0 = level,
            1 => self.outputs.d1 = level,
            other => return Err(EmulatorError::InvalidChannel(other)),
        }
        Ok(())
    }

    /// Cart acceleration commanded through the digital outputs right now.
    pub fn action_input(&self) -> f64 {
        if self.mode != MachineMode::Operate || !self.outputs.d1 {
            return 0.0;
        }
        if self.outputs.d0 {
            self.config.accel_amplitude
        } else {
            -self.config.accel_amplitude
        }
    }

    fn readout(&mut self, quantity: Quantity, state: &SimState) -> f64 {
        let mut v = quantity.of(state);
        if self.config.noise_sigma > 0.0 {
            // sigma was validated finite and positive
            let noise = Normal::new(0.0, self.config.noise_sigma).unwrap();
            v += noise.sample(&mut self.noise_rng);
        }
        if self.config.machine_units {
            v = v.clamp(-1.0, 1.0);
        }
        quantize(v, self.config.quantize_decimals)
    }

    pub fn read_element(&mut self, address: Address) -> Result<f64, EmulatorError> {
        self.catch_up();
        let quantity = self.addresses.lookup(address)?;
        let snapshot = self.state;
        Ok(self.readout(quantity, &snapshot))
    }

    /// Stores `addresses` as the readout group. On error the previous group
    /// is kept.
    pub fn define_readout_group(&mut self, addresses: &[Address]) -> Result<(), EmulatorError> {
        for a in addresses {
            self.addresses.lookup(*a)?;
        }
        self.group = Some(addresses.to_vec());
        Ok(())
    }

    /// Reads every group element from one state snapshot.
    pub fn fetch_readout_group(&mut self) -> Result<Vec<f64>, EmulatorError> {
        self.catch_up();
        let group = self.group.clone().ok_or(EmulatorError::NoReadoutGroup)?;
        let snapshot = self.state;
        group
            .iter()
            .map(|a| {
                let q = self.addresses.lookup(*a)?;
                Ok(self.readout(q, &snapshot))
            })
            .collect()
    }

    fn integrate_steps(&mut self, steps: u64) -> Result<(), EmulatorError> {
        let dt = self.config.dt;
        for _ in 0..steps {
            let action = self.action_input();
            let mut u = action;
            if let Some(d) = &mut self.disturbance {
                u += d.magnitude;
                d.remaining_steps -= 1;
                if d.remaining_steps == 0 {
                    self.disturbance = None;
                }
            }
            self.state = dynamics::step(&self.state, u, dt, &self.config.plant)?;
            self.applied_impulse += action * dt;
        }
        Ok(())
    }

    /// Advances virtual time by `duration` seconds, rounded up to whole steps.
    /// Outside operate mode the state does not change.
    pub fn advance_time(&mut self, duration: f64) -> Result<(), EmulatorError> {
        if self.config.clock != Clock::Virtual {
            return Err(EmulatorError::Usage("advance_time requires the virtual clock"));
        }
        if !(duration.is_finite() && duration >= 0.0) {
            return Err(EmulatorError::Usage("duration must be >= 0"));
        }
        if self.mode != MachineMode::Operate {
            return Ok(());
        }
        self.integrate_steps(steps_for(duration, self.config.dt))
    }

    /// Adds `magnitude` to the plant input for the next `duration` seconds of
    /// simulated time, on top of the action input.
    pub fn inject_disturbance(&mut self, magnitude: f64, duration: f64) -> Result<(), EmulatorError> {
        self.catch_up();
        if self.mode != MachineMode::Operate {
            return Err(EmulatorError::Usage("disturbances need operate mode"));
        }
        if !(magnitude.is_finite() && duration.is_finite() && duration >= 0.0) {
            return Err(EmulatorError::Usage("disturbance needs finite magnitude and duration >= 0"));
        }
        let steps = steps_for(duration, self.config.dt);
        self.disturbance = (steps > 0).then_some(Disturbance { magnitude, remaining_steps: steps });
        Ok(())
    }

    /// Integrates the wall-clock time elapsed since the previous call. A no-op
    /// under the virtual clock and outside operate mode.
    pub fn catch_up(&mut self) {
        let Clock::Realtime { speed, jitter } = self.config.clock else {
            return;
        };
        if self.mode != MachineMode::Operate {
            return;
        }
        let now = Instant::now();
        let Some(last) = self.last_sync.replace(now) else {
            return;
        };
        let mut elapsed = now.duration_since(last).as_secs_f64() * speed;
        if jitter > 0.0 {
            elapsed = (elapsed + self.noise_rng.random_range(-jitter..=jitter)).max(0.0);
        }
        self.carry += elapsed;
        let steps = (self.carry / self.config.dt).floor();
        self.carry -= steps * self.config.dt;
        if self.integrate_steps(steps as u64).is_err() {
            // A blown-up plant stops the machine rather than the server.
            self.mode = MachineMode::Halt;
        }
    }
}

fn seeded_streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut ic = ChaCha8Rng::seed_from_u64(seed);
    ic.set_stream(0);
    let mut noise = ChaCha8Rng::seed_from_u64(seed);
    noise.set_stream(1);
    (ic, noise)
}
