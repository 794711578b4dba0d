//! The Hybrid Controller wire protocol.
//!
//! Commands are raw ASCII without terminators where the grammar does not need
//! one: `x`, `i`, `o`, `h` and `f` are single bytes, `g` is followed by
//! exactly four address digits, `D`/`d` by one channel digit, and `G` lists
//! `;`-separated addresses up to a closing `.`. Responses are lines:
//! `<value> <id>` for single reads, `;`-joined values for bulk reads, and
//! `? <code>` for errors.
//!
//! The extension dialect adds `!w<ms>.`, `!d<magnitude>,<ms>.` and `!s<seed>.`
//! so that a client can drive virtual time, shove the cart, and reseed the
//! emulator. Each extension command is acknowledged with a value line.

mod client;
mod command;
mod response;
mod session;

pub use client::{
    Action, ClientError, HcClient, HybridLink, IoTransport, LoopbackTransport, Transport, STATE_GROUP,
};
pub use command::{
    parse_commands, Command, CommandParser, Dialect, ExtCommand, ParseError, Parsed, MAX_EXT_BODY,
    MAX_GROUP_LEN,
};
pub use response::{Response, ResponseError};
pub use session::{serve, Direction, Session, TranscriptEntry};
