use std::fmt::Write as _;

use thiserror::Error;

use crate::emulator::Address;

/// Longest readout group a `G` command may define.
pub const MAX_GROUP_LEN: usize = 64;
/// Longest body (between the kind letter and the terminating `.`) of an
/// extension command.
pub const MAX_EXT_BODY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dialect {
    /// Only the commands the Model-1 Hybrid Controller understands.
    Strict,
    /// Additionally accepts `!`-prefixed commands for virtual time,
    /// disturbances and reseeding.
    #[default]
    Extension,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExtCommand {
    /// `!w<ms>.` advance virtual time.
    Wait { ms: u32 },
    /// `!d<magnitude>,<ms>.` push the cart for `ms` milliseconds.
    Disturb { magnitude: f64, ms: u32 },
    /// `!s<n>.` reseed the emulator.
    Seed(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    /// `x`
    Reset,
    /// `i`
    InitialCondition,
    /// `o`
    Operate,
    /// `h`
    Halt,
    /// `g` followed by four address digits.
    GetValue(Address),
    /// `G` addresses separated by `;`, terminated by `.`.
    BulkDefine(Vec<Address>),
    /// `f`
    BulkFetch,
    /// `D<n>` sets, `d<n>` clears digital output `n`.
    DigitalOut { channel: u8, level: bool },
    Ext(ExtCommand),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("unknown command byte 0x{0:02x}")]
    UnknownCommand(u8),
    #[error("malformed element address")]
    MalformedAddress,
    #[error("readout group longer than {MAX_GROUP_LEN} addresses")]
    GroupTooLong,
    #[error("digital output channel must be a digit")]
    MalformedChannel,
    #[error("malformed extension command")]
    MalformedExtension,
    #[error("extension commands are disabled in the strict dialect")]
    ExtensionDisabled,
    #[error("input ended inside a command")]
    Truncated,
}

impl ParseError {
    /// Token used in `? <code>` error frames.
    pub fn code(&self) -> &'static str {
        match self {
            ParseError::UnknownCommand(_) => "unknown",
            ParseError::MalformedAddress => "address",
            ParseError::GroupTooLong => "overflow",
            ParseError::MalformedChannel => "channel",
            ParseError::MalformedExtension => "ext",
            ParseError::ExtensionDisabled => "dialect",
            ParseError::Truncated => "truncated",
        }
    }
}

impl Command {
    pub fn to_wire(&self) -> Vec<u8> {
        let mut s = String::new();
        match self {
            Command::Reset => s.push('x'),
            Command::InitialCondition => s.push('i'),
            Command::Operate => s.push('o'),
            Command::Halt => s.push('h'),
            Command::BulkFetch => s.push('f'),
            Command::GetValue(a) => {
                s.push('g');
                s.push_str(a.as_str());
            }
            Command::BulkDefine(addrs) => {
                s.push('G');
                for (i, a) in addrs.iter().enumerate() {
                    if i > 0 {
                        s.push(';');
                    }
                    s.push_str(a.as_str());
                }
                s.push('.');
            }
            Command::DigitalOut { channel, level } => {
                s.push(if *level { 'D' } else { 'd' });
                // channels are single digits by construction of the grammar
                let _ = write!(s, "{channel}");
            }
            Command::Ext(ExtCommand::Wait { ms }) => {
                let _ = write!(s, "!w{ms}.");
            }
            Command::Ext(ExtCommand::Disturb { magnitude, ms }) => {
                let _ = write!(s, "!d{magnitude},{ms}.");
            }
            Command::Ext(ExtCommand::Seed(n)) => {
                let _ = write!(s, "!s{n}.");
            }
        }
        s.into_bytes()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ExtKind {
    Wait,
    Disturb,
    Seed,
}

#[derive(Debug, Clone)]
enum State {
    Idle,
    GetValue { buf: [u8; 4], len: usize },
    BulkDefine { addrs: Vec<Address>, buf: [u8; 4], len: usize },
    Digital { level: bool },
    ExtKind,
    ExtBody { kind: ExtKind, body: Vec<u8>, seen_comma: bool },
}

/// Incremental command parser.
///
/// Bytes may arrive in arbitrary chunks. Whitespace between commands is
/// skipped. A byte that cannot continue the current command ends it with an
/// error and is then parsed again as the start of the next command, so a
/// corrupted frame never swallows the valid command behind it.
#[derive(Debug, Clone)]
pub struct CommandParser {
    dialect: Dialect,
    state: State,
}

pub type Parsed = Result<Command, ParseError>;

impl CommandParser {
    pub fn new(dialect: Dialect) -> Self {
        Self { dialect, state: State::Idle }
    }

    pub fn dialect(&self) -> Dialect {
        self.dialect
    }

    /// True when no command is partially read.
    pub fn is_idle(&self) -> bool {
        matches!(self.state, State::Idle)
    }

    pub fn feed(&mut self, bytes: &[u8], out: &mut Vec<Parsed>) {
        for &b in bytes {
            self.push(b, out);
        }
    }

    /// Call at end of input; reports a command cut off mid-frame.
    pub fn finish(&mut self) -> Option<ParseError> {
        let idle = self.is_idle();
        self.state = State::Idle;
        (!idle).then_some(ParseError::Truncated)
    }

    fn push(&mut self, b: u8, out: &mut Vec<Parsed>) {
        if let Some(reparse) = self.step(b, out) {
            // The offending byte starts over; from Idle this never recurses.
            debug_assert!(self.is_idle());
            let again = self.step(reparse, out);
            debug_assert!(again.is_none());
        }
    }

    /// Returns a byte that must be parsed again from the idle state.
    fn step(&mut self, b: u8, out: &mut Vec<Parsed>) -> Option<u8> {
        let state = std::mem::replace(&mut self.state, State::Idle);
        match state {
            State::Idle => {
                match b {
                    b'x' => out.push(Ok(Command::Reset)),
                    b'i' => out.push(Ok(Command::InitialCondition)),
                    b'o' => out.push(Ok(Command::Operate)),
                    b'h' => out.push(Ok(Command::Halt)),
                    b'f' => out.push(Ok(Command::BulkFetch)),
                    b'g' => self.state = State::GetValue { buf: [0; 4], len: 0 },
                    b'G' => self.state = State::BulkDefine { addrs: Vec::new(), buf: [0; 4], len: 0 },
                    b'D' => self.state = State::Digital { level: true },
                    b'd' => self.state = State::Digital { level: false },
                    b'!' if self.dialect == Dialect::Extension => self.state = State::ExtKind,
                    b'!' => out.push(Err(ParseError::ExtensionDisabled)),
                    b' ' | b'\t' | b'\r' | b'\n' => {}
                    other => out.push(Err(ParseError::UnknownCommand(other))),
                }
                None
            }
            State::GetValue { mut buf, len } => {
                if !b.is_ascii_digit() {
                    out.push(Err(ParseError::MalformedAddress));
                    return Some(b);
                }
                buf[len] = b;
                if len + 1 == 4 {
                    out.push(Ok(Command::GetValue(Address::from_bytes(&buf).unwrap())));
                } else {
                    self.state = State::GetValue { buf, len: len + 1 };
                }
                None
            }
            State::BulkDefine { mut addrs, mut buf, len } => match b {
                b'0'..=b'9' if len < 4 => {
                    buf[len] = b;
                    self.state = State::BulkDefine { addrs, buf, len: len + 1 };
                    None
                }
                b'0'..=b'9' => {
                    out.push(Err(ParseError::MalformedAddress));
                    None
                }
                b';' | b'.' => {
                    let terminal = b == b'.';
                    if len == 4 {
                        if addrs.len() == MAX_GROUP_LEN {
                            out.push(Err(ParseError::GroupTooLong));
                            return None;
                        }
                        addrs.push(Address::from_bytes(&buf).unwrap());
                    } else if len != 0 || !(terminal && addrs.is_empty()) {
                        // Only "G." may end without a final address.
                        out.push(Err(ParseError::MalformedAddress));
                        return None;
                    }
                    if terminal {
                        out.push(Ok(Command::BulkDefine(addrs)));
                    } else {
                        self.state = State::BulkDefine { addrs, buf: [0; 4], len: 0 };
                    }
                    None
                }
                _ => {
                    out.push(Err(ParseError::MalformedAddress));
                    Some(b)
                }
            },
            State::Digital { level } => {
                if b.is_ascii_digit() {
                    out.push(Ok(Command::DigitalOut { channel: b - b'0', level }));
                    None
                } else {
                    out.push(Err(ParseError::MalformedChannel));
                    Some(b)
                }
            }
            State::ExtKind => {
                let kind = match b {
                    b'w' => ExtKind::Wait,
                    b'd' => ExtKind::Disturb,
                    b's' => ExtKind::Seed,
                    _ => {
                        out.push(Err(ParseError::MalformedExtension));
                        return Some(b);
                    }
                };
                self.state = State::ExtBody { kind, body: Vec::new(), seen_comma: false };
                None
            }
            State::ExtBody { kind, mut body, mut seen_comma } => {
                // A disturbance magnitude may contain '.', so only the '.'
                // after its comma terminates the frame.
                let ends = b == b'.' && (kind != ExtKind::Disturb || seen_comma);
                if ends {
                    out.push(parse_ext(kind, &body));
                    return None;
                }
                let allowed = match kind {
                    ExtKind::Wait | ExtKind::Seed => b.is_ascii_digit(),
                    ExtKind::Disturb if seen_comma => b.is_ascii_digit(),
                    ExtKind::Disturb => {
                        b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E' | b',')
                    }
                };
                if !allowed {
                    out.push(Err(ParseError::MalformedExtension));
                    return Some(b);
                }
                if body.len() == MAX_EXT_BODY {
                    out.push(Err(ParseError::MalformedExtension));
                    return None;
                }
                seen_comma |= b == b',';
                body.push(b);
                self.state = State::ExtBody { kind, body, seen_comma };
                None
            }
        }
    }
}

fn parse_ext(kind: ExtKind, body: &[u8]) -> Parsed {
    let text = std::str::from_utf8(body).map_err(|_| ParseError::MalformedExtension)?;
    let int = |s: &str| -> Result<u32, ParseError> {
        if s.is_empty() {
            return Err(ParseError::MalformedExtension);
        }
        s.parse().map_err(|_| ParseError::MalformedExtension)
    };
    let cmd = match kind {
        ExtKind::Wait => ExtCommand::Wait { ms: int(text)? },
        ExtKind::Seed => {
            ExtCommand::Seed(text.parse().map_err(|_| ParseError::MalformedExtension)?)
        }
        ExtKind::Disturb => {
            let (mag, ms) = text.split_once(',').ok_or(ParseError::MalformedExtension)?;
            let magnitude: f64 = mag.parse().map_err(|_| ParseError::MalformedExtension)?;
            if !magnitude.is_finite() {
                return Err(ParseError::MalformedExtension);
            }
            ExtCommand::Disturb { magnitude, ms: int(ms)? }
        }
    };
    Ok(Command::Ext(cmd))
}

/// Parses a complete byte string, reporting a trailing partial command as
/// [`ParseError::Truncated`].
pub fn parse_commands(bytes: &[u8], dialect: Dialect) -> Vec<Parsed> {
    let mut parser = CommandParser::new(dialect);
    let mut out = Vec::new();
    parser.feed(bytes, &mut out);
    if let Some(e) = parser.finish() {
        out.push(Err(e));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(bytes: &str) -> Parsed {
        let mut v = parse_commands(bytes.as_bytes(), Dialect::Extension);
        assert_eq!(v.len(), 1, "{bytes:?} gave {v:?}");
        v.remove(0)
    }

    fn addr(s: &str) -> Address {
        s.parse().unwrap()
    }

    #[test]
    fn single_character_commands() {
        assert_eq!(one("x"), Ok(Command::Reset));
        assert_eq!(one("i"), Ok(Command::InitialCondition));
        assert_eq!(one("o"), Ok(Command::Operate));
        assert_eq!(one("h"), Ok(Command::Halt));
        assert_eq!(one("f"), Ok(Command::BulkFetch));
    }

    #[test]
    fn readout_group_definition() {
        assert_eq!(
            one("G0223;0222;0161;0160."),
            Ok(Command::BulkDefine(vec![addr("0223"), addr("0222"), addr("0161"), addr("0160")]))
        );
        assert_eq!(one("G."), Ok(Command::BulkDefine(vec![])));
        assert_eq!(parse_commands(b"G0223;.", Dialect::Strict)[0], Err(ParseError::MalformedAddress));
        assert_eq!(parse_commands(b"G022.", Dialect::Strict)[0], Err(ParseError::MalformedAddress));
    }

    #[test]
    fn digital_outputs() {
        assert_eq!(one("D0"), Ok(Command::DigitalOut { channel: 0, level: true }));
        assert_eq!(one("d1"), Ok(Command::DigitalOut { channel: 1, level: false }));
    }

    #[test]
    fn get_value_takes_four_digits() {
        assert_eq!(one("g0223"), Ok(Command::GetValue(addr("0223"))));
        let v = parse_commands(b"g0223f", Dialect::Strict);
        assert_eq!(v, vec![Ok(Command::GetValue(addr("0223"))), Ok(Command::BulkFetch)]);
    }

    #[test]
    fn unknown_byte_resynchronizes() {
        let v = parse_commands(b"qf", Dialect::Strict);
        assert_eq!(v, vec![Err(ParseError::UnknownCommand(b'q')), Ok(Command::BulkFetch)]);
        let v = parse_commands(b"g02f", Dialect::Strict);
        assert_eq!(v, vec![Err(ParseError::MalformedAddress), Ok(Command::BulkFetch)]);
        let v = parse_commands(b"Dxo", Dialect::Strict);
        assert_eq!(
            v,
            vec![Err(ParseError::MalformedChannel), Ok(Command::Reset), Ok(Command::Operate)]
        );
    }

    #[test]
    fn extension_commands() {
        assert_eq!(one("!w20."), Ok(Command::Ext(ExtCommand::Wait { ms: 20 })));
        assert_eq!(one("!d-5.5,100."), Ok(Command::Ext(ExtCommand::Disturb { magnitude: -5.5, ms: 100 })));
        assert_eq!(one("!s42."), Ok(Command::Ext(ExtCommand::Seed(42))));
        assert_eq!(one("!w."), Err(ParseError::MalformedExtension));
        assert_eq!(one("!d1e400,5."), Err(ParseError::MalformedExtension));
        assert_eq!(
            parse_commands(b"!w20.", Dialect::Strict),
            vec![
                Err(ParseError::ExtensionDisabled),
                Err(ParseError::UnknownCommand(b'w')),
                Err(ParseError::UnknownCommand(b'2')),
                Err(ParseError::UnknownCommand(b'0')),
                Err(ParseError::UnknownCommand(b'.')),
            ]
        );
    }

    #[test]
    fn truncated_input_is_reported() {
        assert_eq!(parse_commands(b"g02", Dialect::Strict), vec![Err(ParseError::Truncated)]);
        assert_eq!(parse_commands(b"G0223;0222", Dialect::Strict), vec![Err(ParseError::Truncated)]);
    }

    #[test]
    fn whitespace_between_commands_is_ignored() {
        let v = parse_commands(b"i o\nf ", Dialect::Strict);
        assert_eq!(v, vec![Ok(Command::InitialCondition), Ok(Command::Operate), Ok(Command::BulkFetch)]);
    }

    #[test]
    fn group_length_is_capped() {
        let mut wire = String::from("G");
        for i in 0..=MAX_GROUP_LEN {
            if i > 0 {
                wire.push(';');
            }
            wire.push_str("0223");
        }
        wire.push('.');
        let v = parse_commands(wire.as_bytes(), Dialect::Strict);
        assert!(v.contains(&Err(ParseError::GroupTooLong)));
        assert!(v.iter().all(|r| r.is_err()));
    }

    #[test]
    fn serialization_matches_wire_constants() {
        assert_eq!(Command::BulkFetch.to_wire(), b"f");
        assert_eq!(Command::GetValue(addr("0223")).to_wire(), b"g0223");
        assert_eq!(Command::Ext(ExtCommand::Wait { ms: 20 }).to_wire(), b"!w20.");
        assert_eq!(Command::DigitalOut { channel: 0, level: true }.to_wire(), b"D0");
        assert_eq!(Command::DigitalOut { channel: 1, level: false }.to_wire(), b"d1");
        assert_eq!(
            Command::BulkDefine(vec![addr("0223"), addr("0222")]).to_wire(),
            b"G0223;0222."
        );
    }
}
