use std::time::{Duration, Instant};

use super::event::SceneEvent;
use super::reader::SessionReader;
use super::StoreError;

#[derive(Clone, Debug, PartialEq)]
pub struct ReplaySummary {
    pub events_emitted: u64,
    /// From the first delivery to the last.
    pub wall_duration: Duration,
    /// Recorded span between the first and last event, in microseconds.
    pub recorded_duration_us: i64,
    pub speed: f64,
    /// Worst delivery delay behind its schedule.
    pub max_lag: Duration,
}

/// Hands every event to `sink` in file order, spacing deliveries by the
/// recorded gaps divided by `speed`. `f64::INFINITY` streams without
/// waiting.
///
/// Deadlines are absolute from the first delivery, so sleep overshoot does
/// not accumulate.
pub fn replay<E>(
    reader: &SessionReader,
    speed: f64,
    mut sink: impl FnMut(&SceneEvent) -> Result<(), E>,
) -> Result<ReplaySummary, StoreError>
where
    E: Into<Box<dyn std::error::Error + Send + Sync>>,
{
    if speed.is_nan() || speed <= 0.0 {
        return Err(StoreError::InvalidSpeed(speed));
    }
    let mut emitted = 0u64;
    let mut origin: Option<(Instant, i64)> = None;
    let mut last_t = 0;
    let mut finished = None;
    let mut max_lag = Duration::ZERO;
    for event in reader.events()? {
        let event = event?;
        let (start, t0) = *origin.get_or_insert_with(|| (Instant::now(), event.t));
        if speed.is_finite() {
            let due = start + Duration::from_secs_f64((event.t - t0) as f64 / 1e6 / speed);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
            max_lag = max_lag.max(Instant::now().saturating_duration_since(due));
        }
        sink(&event).map_err(|e| StoreError::Sink(e.into()))?;
        finished = Some(Instant::now());
        emitted += 1;
        last_t = event.t;
    }
    let (wall_duration, recorded_duration_us) = match (origin, finished) {
        (Some((start, t0)), Some(end)) => (end - start, last_t - t0),
        _ => (Duration::ZERO, 0),
    };
    Ok(ReplaySummary {
        events_emitted: emitted,
        wall_duration,
        recorded_duration_us,
        speed,
        max_lag,
    })
}
