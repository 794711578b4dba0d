use std::io::{self, BufReader, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use hybrid_cartpole::emulator::Emulator;
use hybrid_cartpole::protocol::{
    serve, ClientError, Dialect, HcClient, HybridLink, IoTransport, LoopbackTransport, Response,
    Session,
};

use crate::config::RunConfig;
use crate::CliError;

pub fn new_session(cfg: &RunConfig) -> Result<Session, CliError> {
    let emu = Emulator::new(cfg.emulator_config()?).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(Session::new(emu, cfg.dialect))
}

/// Serves one session on the first connection. Connections arriving while it
/// runs get a `? busy` frame and are closed.
pub fn serve_tcp(listener: TcpListener, session: Session) -> io::Result<()> {
    let (stream, _) = listener.accept()?;
    stream.set_nodelay(true)?;
    let done = Arc::new(AtomicBool::new(false));
    listener.set_nonblocking(true)?;
    let refuser = {
        let done = Arc::clone(&done);
        thread::spawn(move || {
            let busy = Response::error("busy", "another session is active").to_wire(0);
            while !done.load(Ordering::Acquire) {
                match listener.accept() {
                    Ok((mut other, _)) => {
                        let _ = other.set_nonblocking(false);
                        let _ = other.write_all(busy.as_bytes());
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                        thread::sleep(Duration::from_millis(5));
                    }
                    Err(_) => break,
                }
            }
        })
    };
    let mut session = session;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    let result = serve(&mut reader, &mut writer, &mut session);
    done.store(true, Ordering::Release);
    let _ = refuser.join();
    result
}

/// How the agent reaches the machine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Wiring {
    /// An emulator already listening at this address.
    Connect(String),
    /// A private emulator on a loopback TCP port, so the wire path is used.
    Spawn,
    /// A private emulator called directly, without sockets.
    InProcess,
}

pub struct Link {
    client: Box<dyn HybridLink>,
    server: Option<JoinHandle<io::Result<()>>>,
}

impl Link {
    pub fn open(cfg: &RunConfig, wiring: &Wiring) -> Result<Self, CliError> {
        let wall_clock = !cfg.virtual_time;
        let timeout = Some(Duration::from_secs(30));
        let (client, server): (Box<dyn HybridLink>, _) = match wiring {
            Wiring::InProcess => {
                let mut c = HcClient::new(LoopbackTransport::new(new_session(cfg)?), cfg.dialect)
                    .with_wall_clock(wall_clock);
                c.define_state_group()?;
                (Box::new(c), None)
            }
            Wiring::Spawn => {
                let session = new_session(cfg)?;
                let listener = TcpListener::bind("127.0.0.1:0")?;
                let addr = listener.local_addr()?.to_string();
                let server = thread::spawn(move || serve_tcp(listener, session));
                let mut c = HcClient::new(IoTransport::connect(&addr, timeout)?, cfg.dialect)
                    .with_wall_clock(wall_clock);
                c.define_state_group()?;
                (Box::new(c), Some(server))
            }
            Wiring::Connect(addr) => {
                let transport = IoTransport::connect(addr, timeout)
                    .map_err(|e| CliError::Runtime(format!("cannot connect to {addr}: {e}")))?;
                let mut c = HcClient::new(transport, cfg.dialect).with_wall_clock(wall_clock);
                c.define_state_group()?;
                if cfg.dialect == Dialect::Extension {
                    c.seed(cfg.seed)?;
                }
                (Box::new(c), None)
            }
        };
        Ok(Self { client, server })
    }

    pub fn client(&mut self) -> &mut dyn HybridLink {
        self.client.as_mut()
    }

    /// Closes the connection and waits for a private server to stop.
    pub fn close(self) -> Result<(), CliError> {
        drop(self.client);
        if let Some(server) = self.server {
            server
                .join()
                .map_err(|_| CliError::Runtime("emulator thread panicked".into()))??;
        }
        Ok(())
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
