//! rosbridge-style topic broker over TCP.
//!
//! Clients speak the advertise / unadvertise / publish / subscribe /
//! unsubscribe vocabulary in codec frames. Each topic owns a worker thread
//! that fans publishes out into per-subscriber bounded queues; a full queue
//! drops its oldest frame, so one slow subscriber never stalls a topic.

mod client;
mod envelope;
mod outbox;
mod router;
mod server;

use std::fmt;
use std::io;

use thiserror::Error;

use crate::codec::{Codec, CodecError, DEFAULT_MAX_FRAME};

pub use client::{BridgeClient, BridgeReceiver, BridgeSender, Incoming};
pub use envelope::{
    Envelope, FIELD_MSG, FIELD_OP, FIELD_QUEUE_LENGTH, FIELD_TOPIC, FIELD_TYPE, Op, Status,
    validate_topic,
};
pub use router::{Broker, LocalSession, TopicSummary};
pub use server::{BrokerHandle, start_broker};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SessionId(pub u64);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "session-{}", self.0)
    }
}

#[derive(Clone, Debug)]
pub struct BrokerConfig {
    pub bind: String,
    pub codec: Codec,
    /// Subscriber queue bound used when SUBSCRIBE carries no queue_length.
    pub default_queue_length: usize,
    pub max_frame: usize,
    /// Run a dedicated worker per topic. Off routes inline on the
    /// publisher's session thread.
    pub topic_workers: bool,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        BrokerConfig {
            bind: "127.0.0.1:0".into(),
            codec: Codec::Binary,
            default_queue_length: 1,
            max_frame: DEFAULT_MAX_FRAME,
            topic_workers: true,
        }
    }
}

impl BrokerConfig {
    pub fn validate(&self) -> Result<(), BrokerError> {
        if self.default_queue_length < 1 {
            return Err(BrokerError::InvalidConfig(
                "default queue_length must be at least 1".into(),
            ));
        }
        if self.max_frame < 5 {
            return Err(BrokerError::InvalidConfig("max frame below 5 bytes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BrokerError {
    #[error("cannot bind {addr}: {source}")]
    BindFailed { addr: String, source: io::Error },
    #[error("topic {topic} has type {existing:?}, not {requested:?}")]
    TypeConflict {
        topic: String,
        existing: String,
        requested: String,
    },
    #[error("unknown op {0:?}")]
    UnknownOp(String),
    #[error("malformed envelope: {0}")]
    MalformedEnvelope(String),
    #[error("invalid broker configuration: {0}")]
    InvalidConfig(String),
    #[error("broker reported {}: {}", .0.code.as_deref().unwrap_or("error"), .0.msg)]
    Remote(Status),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl BrokerError {
    /// Name carried in the `code` field of status reports.
    pub fn code(&self) -> &'static str {
        match self {
            BrokerError::BindFailed { .. } => "BindFailed",
            BrokerError::TypeConflict { .. } => "TypeConflict",
            BrokerError::UnknownOp(_) => "UnknownOp",
            BrokerError::MalformedEnvelope(_) | BrokerError::Codec(_) => "MalformedEnvelope",
            BrokerError::InvalidConfig(_) => "InvalidConfig",
            BrokerError::Remote(_) => "Remote",
            BrokerError::Io(_) => "IoError",
        }
    }
}
