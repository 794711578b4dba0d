use std::io::{self, Read, Write};

use crate::emulator::{Emulator, EmulatorError, MachineMode};

use super::command::{Command, CommandParser, Dialect, ExtCommand, ParseError};
use super::response::Response;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ToMachine,
    FromMachine,
}

/// One frame as it crossed the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub frame: String,
}

impl TranscriptEntry {
    /// `> cmd` for received commands, `< line` for responses.
    pub fn to_line(&self) -> String {
        let marker = match self.direction {
            Direction::ToMachine => '>',
            Direction::FromMachine => '<',
        };
        format!("{marker} {}", self.frame.trim_end_matches('\n'))
    }
}

fn emulator_error(e: &EmulatorError) -> Response {
    let code = match e {
        EmulatorError::UnknownAddress(_) => "address",
        EmulatorError::NoReadoutGroup => "group",
        EmulatorError::InvalidChannel(_) => "channel",
        EmulatorError::Usage(_) => "usage",
        EmulatorError::Dynamics(_) => "plant",
    };
    Response::error(code, e.to_string())
}

fn parse_error(e: &ParseError) -> Response {
    Response::error(e.code(), e.to_string())
}

/// Applies wire commands to one emulator, in arrival order.
#[derive(Debug)]
pub struct Session {
    emulator: Emulator,
    parser: CommandParser,
    transcript: Option<Vec<TranscriptEntry>>,
}

impl Session {
    pub fn new(emulator: Emulator, dialect: Dialect) -> Self {
        Self { emulator, parser: CommandParser::new(dialect), transcript: None }
    }

    pub fn with_transcript(mut self) -> Self {
        self.transcript = Some(Vec::new());
        self
    }

    pub fn emulator(&self) -> &Emulator {
        &self.emulator
    }

    pub fn emulator_mut(&mut self) -> &mut Emulator {
        &mut self.emulator
    }

    pub fn into_emulator(self) -> Emulator {
        self.emulator
    }

    pub fn transcript(&self) -> Option<&[TranscriptEntry]> {
        self.transcript.as_deref()
    }

    fn log(&mut self, direction: Direction, frame: String) {
        if let Some(t) = &mut self.transcript {
            t.push(TranscriptEntry { direction, frame });
        }
    }

    fn decimals(&self) -> usize {
        self.emulator.config().quantize_decimals as usize
    }

    /// Executes one command. Mode and digital-output commands answer nothing.
    pub fn apply(&mut self, command: &Command) -> Option<Response> {
        self.emulator.catch_up();
        let emu = &mut self.emulator;
        let result = match command {
            Command::Reset => Ok(None),
            Command::InitialCondition => Ok(None),
            Command::Operate => Ok(None),
            Command::Halt => Ok(None),
            Command::GetValue(a) => emu
                .read_element(*a)
                .map(|value| Some(Response::Value { value, id: a.to_string() })),
            Command::BulkDefine(addrs) => emu.define_readout_group(addrs).map(|_| None),
            Command::BulkFetch => emu.fetch_readout_group().map(|v| Some(Response::Bulk(v))),
            Command::DigitalOut { channel, level } => {
                emu.set_digital_output(*channel, *level).map(|_| None)
            }
            Command::Ext(ExtCommand::Wait { ms }) => emu
                .advance_time(f64::from(*ms) / 1000.0)
                .map(|_| Some(Response::Value { value: emu.state().t, id: "wait".into() })),
            Command::Ext(ExtCommand::Disturb { magnitude, ms }) => emu
                .inject_disturbance(*magnitude, f64::from(*ms) / 1000.0)
                .map(|_| Some(Response::Value { value: *magnitude, id: "disturb".into() })),
            Command::Ext(ExtCommand::Seed(n)) => {
                emu.reseed(*n);
                Ok(Some(Response::Value { value: *n as f64, id: "seed".into() }))
            }
        };
        match command {
            Command::Reset => emu.reset(),
            Command::InitialCondition => emu.set_mode(MachineMode::InitialCondition),
            Command::Operate => emu.set_mode(MachineMode::Operate),
            Command::Halt => emu.set_mode(MachineMode::Halt),
            _ => {}
        }
        result.unwrap_or_else(|e| Some(emulator_error(&e)))
    }

    /// Feeds raw bytes and returns the bytes to send back.
    pub fn handle_bytes(&mut self, bytes: &[u8]) -> Vec<u8> {
        let mut parsed = Vec::new();
        self.parser.feed(bytes, &mut parsed);
        let mut reply = Vec::new();
        for item in parsed {
            let response = match item {
                Ok(cmd) => {
                    if self.transcript.is_some() {
                        self.log(Direction::ToMachine, String::from_utf8_lossy(&cmd.to_wire()).into_owned());
                    }
                    self.apply(&cmd)
                }
                Err(e) => Some(parse_error(&e)),
            };
            if let Some(r) = response {
                let line = r.to_wire(self.decimals());
                reply.extend_from_slice(line.as_bytes());
                self.log(Direction::FromMachine, line);
            }
        }
        reply
    }

    /// Ends the session: a partially received command is dropped and the
    /// machine halts.
    pub fn close(&mut self) {
        self.parser.finish();
        self.emulator.set_mode(MachineMode::Halt);
    }
}

/// Runs a session over a byte stream until the peer closes it.
///
/// Protocol errors are answered with error frames; transport errors end the
/// session. The machine is halted either way.
pub fn serve<R: Read, W: Write>(reader: &mut R, writer: &mut W, session: &mut Session) -> io::Result<()> {
    let mut buf = [0u8; 4096];
    let result = loop {
        let n = match reader.read(&mut buf) {
            Ok(0) => break Ok(()),
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => break Err(e),
        };
        let reply = session.handle_bytes(&buf[..n]);
        if !reply.is_empty() {
            if let Err(e) = writer.write_all(&reply).and_then(|_| writer.flush()) {
                break Err(e);
            }
        }
    };
    session.close();
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emulator::EmulatorConfig;

    fn session(phi0_max: f64) -> Session {
        let emu = Emulator::new(EmulatorConfig { phi0_max, ..EmulatorConfig::default() }).unwrap();
        Session::new(emu, Dialect::Extension).with_transcript()
    }

    #[test]
    fn training_loop_sequence_returns_one_bulk_line() {
        let mut s = session(0.05);
        let reply = s.handle_bytes(b"iox");
        assert!(reply.is_empty());
        let reply = s.handle_bytes(b"ioG0223;0222;0161;0160.f");
        let text = String::from_utf8(reply).unwrap();
        assert_eq!(text.lines().count(), 1);
        match Response::parse(&text).unwrap() {
            Response::Bulk(v) => assert_eq!(v.len(), 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_read_after_upright_start() {
        let mut s = session(0.0);
        assert_eq!(s.handle_bytes(b"ig0161"), b"0.0000 0161\n");
    }

    #[test]
    fn errors_do_not_end_the_session() {
        let mut s = session(0.0);
        assert_eq!(s.handle_bytes(b"f"), b"? group\n");
        assert_eq!(s.handle_bytes(b"g9999"), b"? address\n");
        assert_eq!(s.handle_bytes(b"D7"), b"? channel\n");
        assert_eq!(s.handle_bytes(b"q"), b"? unknown\n");
        assert_eq!(s.handle_bytes(b"!d1.0,10."), b"? usage\n");
        assert_eq!(s.handle_bytes(b"G0223.f"), b"0.0000\n");
    }

    #[test]
    fn group_survives_mode_changes_but_not_reset() {
        let mut s = session(0.0);
        s.handle_bytes(b"G0223;0161.");
        s.handle_bytes(b"iohoi");
        assert_eq!(s.handle_bytes(b"f"), b"0.0000;0.0000\n");
        s.handle_bytes(b"x");
        assert_eq!(s.handle_bytes(b"f"), b"? group\n");
    }

    #[test]
    fn wait_advances_virtual_time() {
        let mut s = session(0.0);
        s.handle_bytes(b"ioD0D1");
        assert_eq!(s.handle_bytes(b"!w20."), b"0.0200 wait\n");
        s.handle_bytes(b"d1");
        assert!((s.emulator().applied_impulse() - 0.2).abs() < 1e-9);
    }

    #[test]
    fn transcript_records_arrival_order() {
        let mut s = session(0.0);
        s.handle_bytes(b"G0223.io");
        s.handle_bytes(b"f h");
        let lines: Vec<String> = s.transcript().unwrap().iter().map(|e| e.to_line()).collect();
        assert_eq!(lines, ["> G0223.", "> i", "> o", "> f", "< 0.0000", "> h"]);
    }

    #[test]
    fn serve_halts_on_close() {
        let mut s = session(0.0);
        let mut input: &[u8] = b"G0223;0222;0161;0160.iof";
        let mut output = Vec::new();
        serve(&mut input, &mut output, &mut s).unwrap();
        assert_eq!(output, b"0.0000;0.0000;0.0000;0.0000\n");
        assert_eq!(s.emulator().mode(), MachineMode::Halt);
    }
}
