use std::collections::VecDeque;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use thiserror::Error;

use crate::emulator::Address;

use super::command::{Command, Dialect, ExtCommand};
use super::response::{Response, ResponseError};
use super::session::Session;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Io(#[from] io::Error),
    #[error("connection closed by the machine")]
    Closed,
    #[error(transparent)]
    Response(#[from] ResponseError),
    #[error("machine reported error `{0}`")]
    Remote(String),
    #[error("expected {expected} values, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("unexpected response {0:?}")]
    Unexpected(Response),
    #[error("{0}")]
    Unsupported(&'static str),
}

/// Byte pipe to a Hybrid Controller.
pub trait Transport {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()>;
    /// Next response line without its newline. `Ok(None)` on end of stream.
    fn read_line(&mut self) -> io::Result<Option<String>>;
}

/// Transport over any reader/writer pair, e.g. a TCP stream or stdio.
pub struct IoTransport<R, W> {
    reader: BufReader<R>,
    writer: W,
}

impl<R: Read, W: Write> IoTransport<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        Self { reader: BufReader::new(reader), writer }
    }
}

impl IoTransport<TcpStream, TcpStream> {
    /// Connects with Nagle disabled and the given read timeout.
    pub fn connect(addr: &str, timeout: Option<Duration>) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(timeout)?;
        Ok(Self::new(stream.try_clone()?, stream))
    }
}

impl<R: Read, W: Write> Transport for IoTransport<R, W> {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.writer.write_all(bytes)?;
        self.writer.flush()
    }

    fn read_line(&mut self) -> io::Result<Option<String>> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        if line.ends_with('\n') {
            line.pop();
        }
        Ok(Some(line))
    }
}

/// In-memory transport feeding a [`Session`] directly, without sockets.
pub struct LoopbackTransport {
    session: Session,
    pending: VecDeque<String>,
    partial: String,
}

impl LoopbackTransport {
    pub fn new(session: Session) -> Self {
        Self { session, pending: VecDeque::new(), partial: String::new() }
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn session_mut(&mut self) -> &mut Session {
        &mut self.session
    }
}

impl Transport for LoopbackTransport {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        let reply = self.session.handle_bytes(bytes);
        self.partial.push_str(&String::from_utf8_lossy(&reply));
        while let Some(pos) = self.partial.find('\n') {
            let line: String = self.partial.drain(..=pos).collect();
            self.pending.push_back(line[..line.len() - 1].to_string());
        }
        Ok(())
    }

    fn read_line(&mut self) -> io::Result<Option<String>> {
        Ok(self.pending.pop_front())
    }
}

/// Push direction chosen by the agent. Action `1` sets digital output 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Zero,
    One,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Zero, Action::One];

    pub fn index(self) -> usize {
        match self {
            Action::Zero => 0,
            Action::One => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Action::Zero),
            1 => Some(Action::One),
            _ => None,
        }
    }
}

/// What the learning loop needs from the machine.
pub trait HybridLink {
    fn initial_condition(&mut self) -> Result<(), ClientError>;
    fn operate(&mut self) -> Result<(), ClientError>;
    fn halt(&mut self) -> Result<(), ClientError>;
    /// `(x, x_dot, phi, phi_dot)` from the readout group.
    fn sim_state(&mut self) -> Result<[f64; 4], ClientError>;
    /// Pushes the cart for `impulse_ms` milliseconds.
    fn influence(&mut self, action: Action, impulse_ms: u32) -> Result<(), ClientError>;

    fn disturb(&mut self, _magnitude: f64, _ms: u32) -> Result<(), ClientError> {
        Err(ClientError::Unsupported("disturbances need the extension dialect"))
    }
}

/// Client side of the Hybrid Controller protocol.
pub struct HcClient<T> {
    transport: T,
    dialect: Dialect,
    wall_clock: bool,
}

pub const STATE_GROUP: [Address; 4] =
    [Address::CART_X, Address::CART_VELOCITY, Address::POLE_ANGLE, Address::POLE_VELOCITY];

impl<T: Transport> HcClient<T> {
    pub fn new(transport: T, dialect: Dialect) -> Self {
        Self { transport, dialect, wall_clock: dialect == Dialect::Strict }
    }

    /// Time impulses by sleeping instead of `!w`. Needed against a realtime
    /// machine, where `!w` is refused. Always on for the strict dialect.
    pub fn with_wall_clock(mut self, on: bool) -> Self {
        self.wall_clock = on || self.dialect == Dialect::Strict;
        self
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    pub fn dialect(&self) -> Dialect {
        self.dialect
    }

    pub fn send(&mut self, command: &Command) -> Result<(), ClientError> {
        Ok(self.transport.send(&command.to_wire())?)
    }

    fn receive(&mut self) -> Result<Response, ClientError> {
        let line = self.transport.read_line()?.ok_or(ClientError::Closed)?;
        match Response::parse(&line)? {
            Response::Error { code, .. } => Err(ClientError::Remote(code)),
            r => Ok(r),
        }
    }

    pub fn request(&mut self, command: &Command) -> Result<Response, ClientError> {
        self.send(command)?;
        self.receive()
    }

    pub fn reset(&mut self) -> Result<(), ClientError> {
        self.send(&Command::Reset)
    }

    /// Defines the `(x, x_dot, phi, phi_dot)` readout group.
    pub fn define_state_group(&mut self) -> Result<(), ClientError> {
        self.send(&Command::BulkDefine(STATE_GROUP.to_vec()))
    }

    pub fn get_value(&mut self, address: Address) -> Result<f64, ClientError> {
        match self.request(&Command::GetValue(address))? {
            Response::Value { value, .. } => Ok(value),
            other => Err(ClientError::Unexpected(other)),
        }
    }

    pub fn fetch(&mut self) -> Result<Vec<f64>, ClientError> {
        match self.request(&Command::BulkFetch)? {
            Response::Bulk(values) => Ok(values),
            other => Err(ClientError::Unexpected(other)),
        }
    }

    fn ext(&mut self, command: ExtCommand) -> Result<(), ClientError> {
        if self.dialect != Dialect::Extension {
            return Err(ClientError::Unsupported("extension commands are disabled"));
        }
        match self.request(&Command::Ext(command))? {
            Response::Value { .. } => Ok(()),
            other => Err(ClientError::Unexpected(other)),
        }
    }

    /// Advances virtual time on the machine.
    pub fn wait(&mut self, ms: u32) -> Result<(), ClientError> {
        self.ext(ExtCommand::Wait { ms })
    }

    pub fn seed(&mut self, seed: u64) -> Result<(), ClientError> {
        self.ext(ExtCommand::Seed(seed))
    }
}

impl<T: Transport> HybridLink for HcClient<T> {
    fn initial_condition(&mut self) -> Result<(), ClientError> {
        self.send(&Command::InitialCondition)
    }

    fn operate(&mut self) -> Result<(), ClientError> {
        self.send(&Command::Operate)
    }

    fn halt(&mut self) -> Result<(), ClientError> {
        self.send(&Command::Halt)
    }

    fn sim_state(&mut self) -> Result<[f64; 4], ClientError> {
        let values = self.fetch()?;
        <[f64; 4]>::try_from(values.as_slice())
            .map_err(|_| ClientError::Arity { expected: 4, got: values.len() })
    }

    fn influence(&mut self, action: Action, impulse_ms: u32) -> Result<(), ClientError> {
        let direction = action == Action::One;
        self.send(&Command::DigitalOut { channel: 0, level: direction })?;
        self.send(&Command::DigitalOut { channel: 1, level: true })?;
        if self.wall_clock {
            std::thread::sleep(Duration::from_millis(u64::from(impulse_ms)));
        } else {
            self.wait(impulse_ms)?;
        }
        self.send(&Command::DigitalOut { channel: 1, level: false })
    }

    fn disturb(&mut self, magnitude: f64, ms: u32) -> Result<(), ClientError> {
        self.ext(ExtCommand::Disturb { magnitude, ms })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SimState;
    use crate::emulator::{Emulator, EmulatorConfig};

    /// Records sent frames and replays canned response lines.
    #[derive(Default)]
    struct Scripted {
        sent: Vec<String>,
        replies: VecDeque<String>,
    }

    impl Transport for Scripted {
        fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
            self.sent.push(String::from_utf8(bytes.to_vec()).unwrap());
            Ok(())
        }
        fn read_line(&mut self) -> io::Result<Option<String>> {
            Ok(self.replies.pop_front())
        }
    }

    fn loopback(state: SimState) -> HcClient<LoopbackTransport> {
        let mut emu = Emulator::new(EmulatorConfig { phi0_max: 0.0, ..Default::default() }).unwrap();
        emu.set_state(state);
        HcClient::new(LoopbackTransport::new(Session::new(emu, Dialect::Extension)), Dialect::Extension)
    }

    #[test]
    fn sim_state_reads_the_group() {
        let mut c = loopback(SimState::default());
        c.define_state_group().unwrap();
        assert_eq!(c.sim_state().unwrap(), [0.0; 4]);
    }

    #[test]
    fn wrong_arity_is_reported() {
        let mut c = HcClient::new(Scripted::default(), Dialect::Strict);
        c.transport.replies.push_back("0.1;0.2;0.3".into());
        assert!(matches!(c.sim_state(), Err(ClientError::Arity { expected: 4, got: 3 })));
        c.transport.replies.push_back("0.1;x;0.3;0".into());
        assert!(matches!(c.sim_state(), Err(ClientError::Response(_))));
        assert!(matches!(c.sim_state(), Err(ClientError::Closed)));
    }

    #[test]
    fn bulk_fetch_matches_single_reads() {
        let mut c = loopback(SimState::new(0.1234, -0.5, 0.0321, 1.25));
        c.define_state_group().unwrap();
        c.send(&Command::Halt).unwrap();
        let bulk = c.sim_state().unwrap();
        let single: Vec<f64> = STATE_GROUP.iter().map(|a| c.get_value(*a).unwrap()).collect();
        assert_eq!(bulk.to_vec(), single);
    }

    #[test]
    fn influence_byte_sequence() {
        let mut c = HcClient::new(Scripted::default(), Dialect::Strict);
        c.influence(Action::One, 1).unwrap();
        assert_eq!(c.transport.sent, ["D0", "D1", "d1"]);
        let mut c = HcClient::new(Scripted::default(), Dialect::Strict);
        c.influence(Action::Zero, 1).unwrap();
        assert_eq!(c.transport.sent, ["d0", "D1", "d1"]);

        let mut c = HcClient::new(Scripted::default(), Dialect::Extension);
        c.transport.replies.push_back("0.0200 wait".into());
        c.influence(Action::One, 20).unwrap();
        assert_eq!(c.transport.sent, ["D0", "D1", "!w20.", "d1"]);
    }

    #[test]
    fn extension_impulse_advances_exactly_twenty_ms() {
        let mut c = loopback(SimState::default());
        c.operate().unwrap();
        c.influence(Action::Zero, 20).unwrap();
        let emu = c.transport().session().emulator();
        assert!((emu.state().t - 0.020).abs() < 1e-12);
        assert!((emu.applied_impulse() + 0.2).abs() <= 1e-9);
    }

    #[test]
    fn strict_client_refuses_extension_commands() {
        let mut c = HcClient::new(Scripted::default(), Dialect::Strict);
        assert!(matches!(c.wait(5), Err(ClientError::Unsupported(_))));
        assert!(c.transport.sent.is_empty());
    }

    #[test]
    fn remote_errors_surface() {
        let mut c = loopback(SimState::default());
        assert!(matches!(c.sim_state(), Err(ClientError::Remote(code)) if code == "group"));
    }
}
