//! Equations of motion for the inverted pendulum on a cart.
//!
//! The angle `phi` is measured from the upright position, so `phi = 0` is the
//! unstable equilibrium. Two plant variants are available:
//!
//! * [`PlantMode::Simplified`] neglects the bob mass against the cart mass.
//!   The cart then obeys `x'' = u` with `u` the commanded acceleration, and
//!   the pole follows `phi'' = (x'' cos(phi) + g sin(phi)) / l`. This is the
//!   program wired on the analog computer.
//! * [`PlantMode::Full`] solves the coupled Euler-Lagrange pair with `u`
//!   interpreted as the force on the cart.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid plant parameter: {0}")]
    InvalidParams(&'static str),
    #[error("integration step must be positive, got {0}")]
    InvalidStep(f64),
}

/// Cart-pole state plus simulation time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimState {
    pub x: f64,
    pub x_dot: f64,
    pub phi: f64,
    pub phi_dot: f64,
    pub t: f64,
}

impl SimState {
    pub fn new(x: f64, x_dot: f64, phi: f64, phi_dot: f64) -> Self {
        Self { x, x_dot, phi, phi_dot, t: 0.0 }
    }

    /// `(x, x_dot, phi, phi_dot)`, the order used by readout groups and the agent.
    pub fn observation(&self) -> [f64; 4] {
        [self.x, self.x_dot, self.phi, self.phi_dot]
    }

    fn is_finite(&self) -> bool {
        self.observation().iter().all(|v| v.is_finite()) && self.t.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantMode {
    /// Bob mass neglected; input is cart acceleration.
    #[default]
    Simplified,
    /// Coupled equations; input is force on the cart.
    Full,
}

/// Physical constants and terminal bounds of the plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    pub g: f64,
    pub l: f64,
    pub cart_mass: f64,
    /// Only read in [`PlantMode::Full`].
    pub bob_mass: f64,
    pub mode: PlantMode,
    pub beta_x: f64,
    pub beta_phi: f64,
    pub x_max: f64,
    pub phi_max: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            g: 9.81,
            l: 1.0,
            cart_mass: 1.0,
            bob_mass: 0.1,
            mode: PlantMode::Simplified,
            beta_x: 0.0,
            beta_phi: 0.0,
            x_max: 1.0,
            phi_max: 0.5,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.g) {
            return Err(DynamicsError::InvalidParams("g must be > 0"));
        }
        if !positive(self.l) {
            return Err(DynamicsError::InvalidParams("l must be > 0"));
        }
        if !positive(self.cart_mass) {
            return Err(DynamicsError::InvalidParams("cart mass must be > 0"));
        }
        if !(self.bob_mass.is_finite() && self.bob_mass >= 0.0) {
            return Err(DynamicsError::InvalidParams("bob mass must be >= 0"));
        }
        if !(self.beta_x.is_finite() && self.beta_phi.is_finite()) {
            return Err(DynamicsError::InvalidParams("damping must be finite"));
        }
        if !positive(self.x_max) {
            return Err(DynamicsError::InvalidParams("x_max must be > 0"));
        }
        if !(positive(self.phi_max) && self.phi_max < std::f64::consts::FRAC_PI_2) {
            return Err(DynamicsError::InvalidParams("phi_max must lie in (0, pi/2)"));
        }
        Ok(())
    }
}

/// Time derivative of the four state components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Derivatives {
    pub dx: f64,
    pub dx_dot: f64,
    pub dphi: f64,
    pub dphi_dot: f64,
}

/// Right-hand side of the equations of motion.
///
/// `u` is the cart acceleration in simplified mode and the force on the cart
/// in full mode.
pub fn derivatives(
    state: &SimState,
    u: f64,
    params: &PlantParams,
) -> Result<Derivatives, DynamicsError> {
    if !state.is_finite() {
        return Err(DynamicsError::NonFinite("state"));
    }
    if !u.is_finite() {
        return Err(DynamicsError::NonFinite("input"));
    }
    let (sin, cos) = state.phi.sin_cos();
    let PlantParams { g, l, .. } = *params;

    let x_ddot = match params.mode {
        PlantMode::Simplified => u,
        PlantMode::Full => {
            let m = params.bob_mass;
            (u - m * l * state.phi_dot * state.phi_dot * sin + m * g * sin * cos)
                / (params.cart_mass + m * sin * sin)
        }
    } - params.beta_x * state.x_dot;
    let phi_ddot = (x_ddot * cos + g * sin) / l - params.beta_phi * state.phi_dot;

    Ok(Derivatives {
        dx: state.x_dot,
        dx_dot: x_ddot,
        dphi: state.phi_dot,
        dphi_dot: phi_ddot,
    })
}

fn offset(state: &SimState, k: &Derivatives, h: f64) -> SimState {
    SimState {
        x: state.x + h * k.dx,
        x_dot: state.x_dot + h * k.dx_dot,
        phi: state.phi + h * k.dphi,
        phi_dot: state.phi_dot + h * k.dphi_dot,
        t: state.t + h,
    }
}

/// One classical fourth-order Runge-Kutta step with `u` held constant.
pub fn step(
    state: &SimState,
    u: f64,
    dt: f64,
    params: &PlantParams,
) -> Result<SimState, DynamicsError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(DynamicsError::InvalidStep(dt));
    }
    let k1 = derivatives(state, u, params)?;
    let k2 = derivatives(&offset(state, &k1, dt / 2.0), u, params)?;
    let k3 = derivatives(&offset(state, &k2, dt / 2.0), u, params)?;
    let k4 = derivatives(&offset(state, &k3, dt), u, params)?;
    let w = dt / 6.0;
    let next = SimState {
        x: state.x + w * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx),
        x_dot: state.x_dot + w * (k1.dx_dot + 2.0 * k2.dx_dot + 2.0 * k3.dx_dot + k4.dx_dot),
        phi: state.phi + w * (k1.dphi + 2.0 * k2.dphi + 2.0 * k3.dphi + k4.dphi),
        phi_dot: state.phi_dot
            + w * (k1.dphi_dot + 2.0 * k2.dphi_dot + 2.0 * k3.dphi_dot + k4.dphi_dot),
        t: state.t + dt,
    };
    if !next.is_finite() {
        return Err(DynamicsError::NonFinite("integrated state"));
    }
    Ok(next)
}

/// True once the cart left its track or the pole fell past `phi_max`.
pub fn is_terminal(state: &SimState, params: &PlantParams) -> bool {
    state.x.abs() > params.x_max || state.phi.abs() > params.phi_max
}

/// Total mechanical energy `T + V` with `V = m g l cos(phi)`.
///
/// Full mode uses the coupled kinetic energy of cart and bob. Simplified mode
/// takes a unit bob mass and measures the pendulum energy in the cart frame;
/// the cart term `M x_dot^2 / 2` is constant there whenever `u = 0`, which is
/// the only setting in which this quantity is used.
pub fn total_energy(state: &SimState, params: &PlantParams) -> f64 {
    let PlantParams { g, l, cart_mass, .. } = *params;
    let (x_dot, phi_dot) = (state.x_dot, state.phi_dot);
    match params.mode {
        PlantMode::Simplified => {
            let m = 1.0;
            0.5 * cart_mass * x_dot * x_dot
                + 0.5 * m * l * l * phi_dot * phi_dot
                + m * g * l * state.phi.cos()
        }
        PlantMode::Full => {
            let m = params.bob_mass;
            0.5 * (cart_mass + m) * x_dot * x_dot - m * l * x_dot * phi_dot * state.phi.cos()
                + 0.5 * m * l * l * phi_dot * phi_dot
                + m * g * l * state.phi.cos()
        }
    }
}

/// Start of an episode: cart at rest in the middle, pole tilted by a uniform
/// draw from `[-phi0_max, phi0_max]`.
pub fn initial_state<R: Rng + ?Sized>(phi0_max: f64, rng: &mut R) -> SimState {
    let u: f64 = rng.random();
    let phi = if phi0_max == 0.0 { 0.0 } else { (2.0 * u - 1.0) * phi0_max };
    SimState::new(0.0, 0.0, phi, 0.0)
}
