//! A software stand-in for an analog computer running the cart-pole, the
//! Hybrid Controller protocol used to drive it, and a Q-learning agent that
//! learns to balance the pole through that protocol.
//!
//! ```
//! use hybrid_cartpole::emulator::{Clock, Emulator, EmulatorConfig};
//! use hybrid_cartpole::protocol::{Dialect, HcClient, HybridLink, LoopbackTransport, Session, Action};
//!
//! let config = EmulatorConfig { clock: Clock::Virtual, ..EmulatorConfig::default() };
//! let session = Session::new(Emulator::new(config).unwrap(), Dialect::Extension);
//! let mut link = HcClient::new(LoopbackTransport::new(session), Dialect::Extension);
//! link.define_state_group().unwrap();
//! link.initial_condition().unwrap();
//! link.operate().unwrap();
//! link.influence(Action::One, 20).unwrap();
//! let [x, x_dot, _phi, _phi_dot] = link.sim_state().unwrap();
//! assert!(x > 0.0 && x_dot > 0.0);
//! ```

pub mod agent;
pub mod dynamics;
pub mod emulator;
pub mod protocol;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/plant.md")]
    mod plant {}
    #[doc = include_str!("../../../book/src/emulator.md")]
    mod emulator {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/agent.md")]
    mod agent {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
