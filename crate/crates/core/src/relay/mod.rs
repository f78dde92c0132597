//! Room-based state relay.
//!
//! Clients join rooms and submit avatar states for the entities they own;
//! the relay forwards every accepted state to the other members and keeps
//! the latest state per entity so late joiners start from the current scene.

mod client;
mod event;
mod latency;
mod room;
mod server;
mod sink;

use std::fmt;
use std::io;

use thiserror::Error;

use crate::broker::Status;
use crate::codec::CodecError;
use crate::pose::PoseError;

pub use client::{RelayClient, RelayReceiver, RelaySender};
pub use event::{RelayEvent, RelayRequest, peek_op};
pub use latency::{ClientLog, LatencyReport, LatencySummary, measure_latency};
pub use room::{LocalClient, Relay, Snapshot, Submitted};
pub use server::{RelayConfig, RelayHandle, start_relay};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClientId(pub u64);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "client-{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum RelayError {
    #[error("room {0:?} already exists")]
    RoomExists(String),
    #[error("no room {0:?}")]
    NoSuchRoom(String),
    #[error("{client} is already in room {room:?}")]
    AlreadyMember { room: String, client: ClientId },
    #[error("{client} is not in room {room:?}")]
    NotMember { room: String, client: ClientId },
    #[error("entity {entity:?} is owned by {owner}")]
    NotOwner { entity: String, owner: ClientId },
    #[error("invalid avatar state: {0}")]
    InvalidState(#[from] PoseError),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unknown op {0:?}")]
    UnknownOp(String),
    #[error("no latency samples")]
    EmptyLog,
    #[error("negative latency {latency_us} us for sequence {sequence}")]
    NegativeLatency { sequence: i64, latency_us: i64 },
    #[error("cannot bind {addr}: {source}")]
    BindFailed { addr: String, source: io::Error },
    #[error("relay reported {}: {}", .0.code.as_deref().unwrap_or("error"), .0.msg)]
    Remote(Status),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl RelayError {
    pub fn code(&self) -> &'static str {
        match self {
            RelayError::RoomExists(_) => "RoomExists",
            RelayError::NoSuchRoom(_) => "NoSuchRoom",
            RelayError::AlreadyMember { .. } => "AlreadyMember",
            RelayError::NotMember { .. } => "NotMember",
            RelayError::NotOwner { .. } => "NotOwner",
            RelayError::InvalidState(_) => "InvalidState",
            RelayError::Malformed(_) | RelayError::Codec(_) => "MalformedEnvelope",
            RelayError::UnknownOp(_) => "UnknownOp",
            RelayError::EmptyLog => "EmptyLog",
            RelayError::NegativeLatency { .. } => "NegativeLatency",
            RelayError::BindFailed { .. } => "BindFailed",
            RelayError::Remote(_) => "Remote",
            RelayError::Io(_) => "IoError",
        }
    }
}
