//! Append-only session recording, timed replay and sensor reproduction.
//!
//! A session file is a header frame followed by one BINARY codec frame per
//! event. The optional side index (`<file>.idx`) holds little-endian
//! `(ordinal: i64, offset: i64)` pairs for every 1000th event and can always
//! be rebuilt from the session itself.

mod event;
mod reader;
mod replay;
mod sensor;
mod writer;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::codec::CodecError;
use crate::pose::PoseError;

pub use event::{
    EntityInfo, EventKind, FORMAT_VERSION, PosePayload, Role, SceneEvent, SessionHeader, TaskMarker,
};
pub use reader::{EventIter, IndexEntry, IndexSource, SessionReader};
pub use replay::{ReplaySummary, replay};
pub use sensor::{SensorFunction, SensorSeries, SensorSpec, reproduce_sensor};
pub use writer::{SessionWriter, open_session};

/// Events between index entries.
pub const INDEX_STRIDE: u64 = 1000;

/// Side index location for a session file.
pub fn index_path(session: &Path) -> PathBuf {
    let mut name = OsString::from(session.as_os_str());
    name.push(".idx");
    PathBuf::from(name)
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{} already exists", .0.display())]
    FileExists(PathBuf),
    #[error("timestamp {t} is earlier than the previous event at {previous}")]
    NonMonotonicTimestamp { previous: i64, t: i64 },
    #[error("corrupt frame at byte {offset}: {reason}")]
    CorruptFrame { offset: u64, reason: String },
    #[error("invalid session header: {0}")]
    InvalidHeader(String),
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("invalid pose: {0}")]
    InvalidPose(#[from] PoseError),
    #[error("unknown entity {0:?}")]
    UnknownEntity(String),
    #[error("invalid sensor: {0}")]
    InvalidSensor(String),
    #[error("replay speed must be positive, got {0}")]
    InvalidSpeed(f64),
    #[error("replay sink failed: {0}")]
    Sink(#[source] Box<dyn std::error::Error + Send + Sync>),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
