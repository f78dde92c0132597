use std::time::{Duration, Instant};

use crate::codec::Codec;
use crate::pose::AvatarState;
use crate::relay::{
    ClientLog, LatencyReport, RelayClient, RelayConfig, RelayError, RelayEvent, RelayReceiver,
    measure_latency, peek_op, start_relay,
};

use super::BenchError;

pub const DRIVER_ENTITY: &str = "motion_player";

#[derive(Clone, Debug)]
pub struct LatencyConfig {
    pub client_counts: Vec<usize>,
    pub rate_hz: f64,
    pub duration: Duration,
    pub codec: Codec,
    pub bind: String,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        LatencyConfig {
            client_counts: vec![2, 4, 8],
            rate_hz: 60.0,
            duration: Duration::from_secs(10),
            codec: Codec::Binary,
            bind: "127.0.0.1:0".into(),
        }
    }
}

/// Outcome for one client count. `client_count` includes the driver.
#[derive(Debug)]
pub struct LatencyRun {
    pub client_count: usize,
    pub states_sent: i64,
    pub report: Result<LatencyReport, RelayError>,
    /// Every mirror's last received state equals the driver's final state.
    pub converged: bool,
}

/// Canned motion: `n` poses of the driver avatar at `rate_hz`.
pub fn canned_motion(n: usize, rate_hz: f64) -> Vec<AvatarState> {
    (0..n)
        .map(|i| {
            let phase = i as f64 / rate_hz;
            AvatarState::synthetic(DRIVER_ENTITY, i as i64 + 1, phase)
        })
        .collect()
}

/// For each client count, one driver replays a canned 56-joint motion into a
/// relay room at `rate_hz` while `count - 1` mirrors record arrival times on
/// a clock shared with the driver.
pub fn bench_latency(config: &LatencyConfig) -> Result<Vec<LatencyRun>, BenchError> {
    if config.client_counts.is_empty() || config.client_counts.contains(&0) {
        return Err(BenchError::InvalidConfig("client counts must be positive".into()));
    }
    if !(config.rate_hz.is_finite() && config.rate_hz > 0.0) {
        return Err(BenchError::InvalidConfig("rate must be positive".into()));
    }
    let frames = ((config.duration.as_secs_f64() * config.rate_hz).round() as usize).max(1);
    let motion = canned_motion(frames, config.rate_hz);
    config
        .client_counts
        .iter()
        .map(|&count| run_count(config, count, &motion))
        .collect()
}

struct MirrorLog {
    /// `(receive_us, payload)` in arrival order.
    frames: Vec<(i64, Vec<u8>)>,
}

fn run_count(config: &LatencyConfig, count: usize, motion: &[AvatarState]) -> Result<LatencyRun, BenchError> {
    let relay = start_relay(RelayConfig {
        bind: config.bind.clone(),
        codec: config.codec,
        ..RelayConfig::default()
    })?;
    let addr = relay.local_addr();
    let room = format!("latency-{count}");
    let origin = Instant::now();
    let now_us = move || origin.elapsed().as_micros() as i64;

    let mut driver = RelayClient::connect(addr, config.codec)?;
    driver.create_and_wait(&room)?;
    driver.join_and_wait(&room)?;

    let mut mirrors = Vec::with_capacity(count.saturating_sub(1));
    for _ in 1..count {
        let mut m = RelayClient::connect(addr, config.codec)?;
        m.join_and_wait(&room)?;
        let (tx, rx) = m.split();
        let handle = std::thread::Builder::new()
            .name("mirror".into())
            .spawn(move || record_mirror(rx, now_us))?;
        mirrors.push((tx, handle));
    }

    let (mut driver_tx, driver_rx) = driver.split();
    let period = Duration::from_secs_f64(1.0 / config.rate_hz);
    let start = Instant::now();
    let mut last_sent = None;
    for (i, pose) in motion.iter().enumerate() {
        let deadline = start + period * i as u32;
        if let Some(wait) = deadline.checked_duration_since(Instant::now()) {
            std::thread::sleep(wait);
        }
        let mut state = pose.clone();
        state.send_timestamp = now_us();
        driver_tx.submit(&room, &state)?;
        last_sent = Some(state);
    }
    // Leaving tells each mirror the stream is over; TCP keeps it behind the
    // last state.
    driver_tx.leave_room(&room)?;

    let mut logs = Vec::with_capacity(mirrors.len());
    let mut converged = true;
    for (k, (tx, handle)) in mirrors.into_iter().enumerate() {
        let raw = handle.join().map_err(|_| BenchError::Panicked)??;
        tx.close();
        let mut log = ClientLog::new(format!("mirror-{}", k + 1));
        let mut last = None;
        for (recv_us, payload) in raw.frames {
            if let RelayEvent::State { state, .. } = RelayEvent::decode(&payload, config.codec)? {
                log.push(state.sequence, state.send_timestamp, recv_us);
                last = Some(state);
            }
        }
        converged &= last.is_some() && last == last_sent;
        logs.push(log);
    }
    driver_tx.close();
    drop(driver_rx);
    relay.shutdown();

    Ok(LatencyRun {
        client_count: count,
        states_sent: motion.len() as i64,
        report: measure_latency(count as i32, &logs),
        converged,
    })
}

/// Timestamps each frame on arrival and keeps the raw bytes, so decoding
/// never delays the next mirror's reading.
fn record_mirror(mut rx: RelayReceiver, now_us: impl Fn() -> i64) -> Result<MirrorLog, RelayError> {
    let codec = rx.codec();
    let mut frames = Vec::new();
    loop {
        let payload = rx.recv_payload()?;
        let t = now_us();
        let payload = payload.to_vec();
        if peek_op(&payload, codec)? == "member_left" {
            break;
        }
        frames.push((t, payload));
    }
    Ok(MirrorLog { frames })
}
