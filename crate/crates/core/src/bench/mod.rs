//! Throughput and latency experiments over the broker and the relay.

mod frame;
mod latency;
mod throughput;

use std::time::Duration;

use thiserror::Error;

use crate::broker::BrokerError;
use crate::relay::RelayError;

pub use frame::{BYTES_PER_PIXEL, SyntheticRgbdFrame};
pub use latency::{DRIVER_ENTITY, LatencyConfig, LatencyRun, bench_latency, canned_motion};
pub use throughput::{
    MIN_DURATION, THROUGHPUT_TOPIC, THROUGHPUT_TYPE, ThroughputConfig, ThroughputReport,
    bench_throughput,
};

/// Start of every throughput run that is left out of the measurement.
pub const WARMUP: Duration = Duration::from_secs(1);

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid benchmark configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error(transparent)]
    Relay(#[from] RelayError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("benchmark thread panicked")]
    Panicked,
}
