use std::path::PathBuf;
use std::time::Duration;

use anyhow::{Context, bail};
use hri_bridge::bench::{LatencyConfig, ThroughputConfig, bench_latency, bench_throughput};
use hri_bridge::codec::Codec;
use serde_json::json;

fn duration(seconds: f64) -> anyhow::Result<Duration> {
    Duration::try_from_secs_f64(seconds).with_context(|| format!("invalid duration {seconds}"))
}

pub fn throughput(codec: Codec, width: i32, height: i32, seconds: f64) -> anyhow::Result<()> {
    let report = bench_throughput(&ThroughputConfig {
        codec,
        width,
        height,
        duration: duration(seconds)?,
        ..ThroughputConfig::default()
    })?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

pub fn latency(
    clients: Vec<usize>,
    rate: f64,
    seconds: f64,
    codec: Codec,
    csv_path: Option<PathBuf>,
) -> anyhow::Result<()> {
    let runs = bench_latency(&LatencyConfig {
        client_counts: clients,
        rate_hz: rate,
        duration: duration(seconds)?,
        codec,
        ..LatencyConfig::default()
    })?;

    let mut csv = match &csv_path {
        Some(path) => {
            let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
            w.write_record(["client_count", "client", "sequence", "latency_us"])?;
            Some(w)
        }
        None => None,
    };
    let mut counts = Vec::new();
    let mut all_converged = true;
    for run in &runs {
        all_converged &= run.converged;
        let mut entry = json!({
            "client_count": run.client_count,
            "states_sent": run.states_sent,
            "converged": run.converged,
        });
        match &run.report {
            Ok(report) => {
                entry["pooled"] = serde_json::to_value(report.pooled)?;
                entry["pooled"]["median_ms"] = json!(report.pooled.median_ms());
                entry["clients"] = report
                    .clients
                    .iter()
                    .map(|c| json!({ "client": c.client, "summary": c.summary }))
                    .collect();
                if let Some(w) = csv.as_mut() {
                    for c in &report.clients {
                        for (sequence, latency_us) in &c.samples {
                            w.write_record([
                                run.client_count.to_string(),
                                c.client.clone(),
                                sequence.to_string(),
                                latency_us.to_string(),
                            ])?;
                        }
                    }
                }
            }
            Err(e) => entry["error"] = json!({ "code": e.code(), "message": e.to_string() }),
        }
        counts.push(entry);
    }
    if let Some(mut w) = csv {
        w.flush()?;
    }

    let median = |count: usize| {
        runs.iter()
            .find(|r| r.client_count == count)
            .and_then(|r| r.report.as_ref().ok())
            .map(|r| r.pooled.median_us as f64)
    };
    let lo = runs.iter().map(|r| r.client_count).min();
    let hi = runs.iter().map(|r| r.client_count).max();
    let flatness = match (lo.and_then(median), hi.and_then(median)) {
        (Some(a), Some(b)) if a > 0.0 && lo != hi => Some(b / a),
        _ => None,
    };
    println!(
        "{}",
        json!({
            "rate_hz": rate,
            "codec": codec.as_str(),
            "runs": counts,
            "median_ratio_max_to_min_clients": flatness,
            "all_converged": all_converged,
            "csv": csv_path.map(|p| p.display().to_string()),
        })
    );
    if !all_converged {
        bail!("at least one mirror did not converge to the driver's final pose");
    }
    Ok(())
}
