use serde::Serialize;

use super::RelayError;

/// States one receiver observed, with both clock readings in microseconds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClientLog {
    pub client: String,
    /// `(sequence, send_timestamp_us, receive_time_us)`
    pub records: Vec<(i64, i64, i64)>,
}

impl ClientLog {
    pub fn new(client: impl Into<String>) -> Self {
        ClientLog {
            client: client.into(),
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, sequence: i64, send_us: i64, recv_us: i64) {
        self.records.push((sequence, send_us, recv_us));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LatencySummary {
    pub count: usize,
    /// Lower median.
    pub median_us: i64,
    /// Nearest-rank 95th percentile.
    pub p95_us: i64,
    pub max_us: i64,
}

impl LatencySummary {
    /// `None` for an empty slice.
    pub fn of(latencies: &[i64]) -> Option<Self> {
        if latencies.is_empty() {
            return None;
        }
        let mut sorted = latencies.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let rank95 = (95 * n).div_ceil(100).max(1);
        Some(LatencySummary {
            count: n,
            median_us: sorted[(n - 1) / 2],
            p95_us: sorted[rank95 - 1],
            max_us: sorted[n - 1],
        })
    }

    pub fn median_ms(&self) -> f64 {
        self.median_us as f64 / 1e3
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClientLatency {
    pub client: String,
    /// `(sequence, latency_us)` in arrival order.
    pub samples: Vec<(i64, i64)>,
    pub summary: Option<LatencySummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatencyReport {
    pub client_count: i32,
    pub clients: Vec<ClientLatency>,
    pub pooled: LatencySummary,
}

/// Turns receiver logs into per-client and pooled latency statistics.
///
/// Both clocks must share an epoch; a negative latency means they don't and
/// is rejected.
pub fn measure_latency(client_count: i32, logs: &[ClientLog]) -> Result<LatencyReport, RelayError> {
    let mut pooled = Vec::new();
    let mut clients = Vec::with_capacity(logs.len());
    for log in logs {
        let samples = log
            .records
            .iter()
            .map(|&(sequence, send, recv)| {
                let latency_us = recv - send;
                if latency_us < 0 {
                    Err(RelayError::NegativeLatency {
                        sequence,
                        latency_us,
                    })
                } else {
                    Ok((sequence, latency_us))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let latencies: Vec<i64> = samples.iter().map(|s| s.1).collect();
        pooled.extend_from_slice(&latencies);
        clients.push(ClientLatency {
            client: log.client.clone(),
            summary: LatencySummary::of(&latencies),
            samples,
        });
    }
    Ok(LatencyReport {
        client_count,
        clients,
        pooled: LatencySummary::of(&pooled).ok_or(RelayError::EmptyLog)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(latencies_us: &[i64]) -> ClientLog {
        let mut l = ClientLog::new("m");
        for (i, &lat) in latencies_us.iter().enumerate() {
            l.push(i as i64, 1_000, 1_000 + lat);
        }
        l
    }

    #[test]
    fn single_seventy_ms_sample() {
        let r = measure_latency(2, &[log(&[70_000])]).unwrap();
        assert_eq!(
            r.pooled,
            LatencySummary {
                count: 1,
                median_us: 70_000,
                p95_us: 70_000,
                max_us: 70_000
            }
        );
        assert_eq!(r.pooled.median_ms(), 70.0);
    }

    #[test]
    fn lower_median_and_max() {
        let r = measure_latency(2, &[log(&[4_000, 1_000, 3_000, 2_000])]).unwrap();
        assert_eq!(r.pooled.median_us, 2_000);
        assert_eq!(r.pooled.max_us, 4_000);
        assert_eq!(r.pooled.p95_us, 4_000);
    }

    #[test]
    fn nearest_rank_p95() {
        let lat: Vec<i64> = (1..=100).collect();
        let s = LatencySummary::of(&lat).unwrap();
        assert_eq!((s.median_us, s.p95_us, s.max_us), (50, 95, 100));
        let lat: Vec<i64> = (1..=21).collect();
        assert_eq!(LatencySummary::of(&lat).unwrap().p95_us, 20);
    }

    #[test]
    fn empty_and_negative() {
        assert!(matches!(measure_latency(1, &[]), Err(RelayError::EmptyLog)));
        assert!(matches!(measure_latency(2, &[log(&[])]), Err(RelayError::EmptyLog)));
        let mut l = ClientLog::new("m");
        l.push(1, 10, 5);
        assert!(matches!(measure_latency(2, &[l]), Err(RelayError::NegativeLatency { .. })));
    }

    #[test]
    fn pooled_spans_clients() {
        let r = measure_latency(3, &[log(&[1, 2]), log(&[3, 4, 5])]).unwrap();
        assert_eq!(r.pooled.count, 5);
        assert_eq!(r.pooled.median_us, 3);
        assert_eq!(r.clients[0].summary.unwrap().median_us, 1);
    }
}
