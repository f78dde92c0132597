use std::time::{Duration, Instant};

use serde::Serialize;

use crate::broker::{BridgeClient, BrokerConfig, Envelope, FIELD_MSG, Incoming, start_broker};
use crate::codec::{Codec, Value};

use super::{BenchError, WARMUP};
use super::frame::SyntheticRgbdFrame;

pub const THROUGHPUT_TOPIC: &str = "/camera/rgbd";
pub const THROUGHPUT_TYPE: &str = "sensor_msgs/RGBD";
/// Shortest accepted run.
pub const MIN_DURATION: Duration = Duration::from_secs(5);

#[derive(Clone, Debug)]
pub struct ThroughputConfig {
    pub codec: Codec,
    pub width: i32,
    pub height: i32,
    /// Total run length, warm-up included.
    pub duration: Duration,
    pub bind: String,
}

impl Default for ThroughputConfig {
    fn default() -> Self {
        ThroughputConfig {
            codec: Codec::Binary,
            width: 640,
            height: 480,
            duration: Duration::from_secs(10),
            bind: "127.0.0.1:0".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThroughputReport {
    pub codec_id: String,
    pub frame_bytes: i64,
    /// Length of the measurement window, warm-up excluded.
    pub duration_s: f64,
    pub frames_delivered: i64,
    pub fps: f64,
    #[serde(rename = "MB_per_s")]
    pub mb_per_s: f64,
    /// Frames the publisher wrote, warm-up included.
    pub frames_published: i64,
}

impl ThroughputReport {
    pub fn new(codec: Codec, frame_bytes: i64, duration_s: f64, frames_delivered: i64) -> Self {
        let fps = frames_delivered as f64 / duration_s;
        ThroughputReport {
            codec_id: codec.as_str().to_owned(),
            frame_bytes,
            duration_s,
            frames_delivered,
            fps,
            mb_per_s: fps * frame_bytes as f64 / 1e6,
            frames_published: 0,
        }
    }
}

/// Runs a broker with one publisher sending RGB-D frames as fast as it can
/// and one subscriber (queue length 1) counting complete, decoded frames.
pub fn bench_throughput(config: &ThroughputConfig) -> Result<ThroughputReport, BenchError> {
    if config.duration < MIN_DURATION {
        return Err(BenchError::InvalidConfig(format!(
            "duration must be at least {} s",
            MIN_DURATION.as_secs()
        )));
    }
    if config.width <= 0 || config.height <= 0 {
        return Err(BenchError::InvalidConfig("frame dimensions must be positive".into()));
    }
    let frame_bytes = SyntheticRgbdFrame::frame_bytes(config.width, config.height);
    let broker = start_broker(BrokerConfig {
        bind: config.bind.clone(),
        codec: config.codec,
        ..BrokerConfig::default()
    })?;
    let addr = broker.local_addr();

    let mut subscriber = BridgeClient::connect(addr, config.codec)?
        .with_json_hints(SyntheticRgbdFrame::json_hints());
    subscriber.sender().subscribe(THROUGHPUT_TOPIC, Some(1))?;
    let (sub_tx, mut sub_rx) = subscriber.split();

    let (mut publisher, _pub_rx) = BridgeClient::connect(addr, config.codec)?.split();
    publisher.advertise(THROUGHPUT_TOPIC, THROUGHPUT_TYPE)?;
    if !broker.wait_for_subscribers(&[THROUGHPUT_TOPIC], 1, Duration::from_secs(5)) {
        return Err(BenchError::InvalidConfig("subscriber never registered".into()));
    }

    let pixels = config.width as usize * config.height as usize;
    let counter = std::thread::spawn(move || {
        let mut arrivals = Vec::new();
        loop {
            match sub_rx.recv() {
                Ok(Incoming::Publish { msg, .. }) => {
                    let complete = msg.get_binary("rgb").map(<[u8]>::len) == Some(pixels * 3)
                        && msg.get_binary("depth").map(<[u8]>::len) == Some(pixels * 2);
                    if complete {
                        arrivals.push(Instant::now());
                    } else {
                        log::warn!("incomplete frame received");
                    }
                }
                Ok(_) => {}
                Err(_) => break,
            }
        }
        arrivals
    });

    let frame = SyntheticRgbdFrame::new(config.width, config.height, 0);
    let mut envelope = Envelope::publish(THROUGHPUT_TOPIC, frame.to_document()).into_document();
    let start = Instant::now();
    let window_start = start + WARMUP;
    let end = start + config.duration;
    let mut published = 0i64;
    while Instant::now() < end {
        if let Some(Value::Document(msg)) = envelope.get_mut(FIELD_MSG) {
            if let Some(Value::Document(header)) = msg.get_mut("header") {
                header.insert("seq", published);
                header.insert("stamp_us", start.elapsed().as_micros() as i64);
            }
        }
        publisher.send_document(&envelope)?;
        published += 1;
    }
    let window_end = Instant::now();

    sub_tx.close();
    publisher.close();
    let arrivals = counter.join().map_err(|_| BenchError::Panicked)?;
    broker.shutdown();

    let delivered = arrivals
        .iter()
        .filter(|t| **t >= window_start && **t <= window_end)
        .count() as i64;
    let window = window_end.duration_since(window_start).as_secs_f64();
    let mut report = ThroughputReport::new(config.codec, frame_bytes, window, delivered);
    report.frames_published = published;
    Ok(report)
}
