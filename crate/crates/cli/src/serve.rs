use std::io::Write;

use anyhow::Context;
use hri_bridge::broker::{BrokerConfig, start_broker};
use hri_bridge::codec::Codec;
use hri_bridge::relay::{RelayConfig, start_relay};
use serde_json::json;

/// Announces the bound address on stdout so scripts can pick up port 0.
fn announce(service: &str, addr: std::net::SocketAddr, codec: Codec) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", json!({ "service": service, "listening": addr.to_string(), "codec": codec.as_str() }))?;
    out.flush()?;
    Ok(())
}

pub fn broker(bind: String, codec: Codec, queue_length: usize) -> anyhow::Result<()> {
    let handle = start_broker(BrokerConfig {
        bind: bind.clone(),
        codec,
        default_queue_length: queue_length,
        ..BrokerConfig::default()
    })
    .with_context(|| format!("starting broker on {bind}"))?;
    announce("broker", handle.local_addr(), codec)?;
    handle.wait();
    Ok(())
}

pub fn relay(bind: String, codec: Codec) -> anyhow::Result<()> {
    let handle = start_relay(RelayConfig {
        bind: bind.clone(),
        codec,
        ..RelayConfig::default()
    })
    .with_context(|| format!("starting relay on {bind}"))?;
    announce("relay", handle.local_addr(), codec)?;
    handle.wait();
    Ok(())
}
