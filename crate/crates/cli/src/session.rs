use std::collections::BTreeMap;
use std::path::Path;
use std::sync::mpsc;
use std::time::{Duration, Instant};

use anyhow::{Context, bail};
use hri_bridge::broker::{BridgeClient, Incoming};
use hri_bridge::codec::{Codec, encode_json};
use hri_bridge::pose::AvatarState;
use hri_bridge::relay::{RelayClient, RelayError, RelayEvent};
use hri_bridge::store::{
    EventKind, PosePayload, Role, SceneEvent, SessionHeader, SessionReader, open_session, replay as replay_session,
};
use serde_json::json;

pub enum Source {
    Relay { addr: String, room: String },
    Broker { addr: String, topic: String },
}

/// Something received while recording, stamped on arrival.
enum Captured {
    Pose(AvatarState),
    Message { topic: String, msg: hri_bridge::codec::Document },
}

/// Creates `room` unless it already exists.
fn ensure_room(client: &mut RelayClient, room: &str) -> anyhow::Result<()> {
    match client.create_and_wait(room) {
        Ok(()) => Ok(()),
        Err(RelayError::Remote(status)) if status.code.as_deref() == Some("RoomExists") => Ok(()),
        Err(e) => Err(e).with_context(|| format!("creating room {room}")),
    }
}

/// Captures traffic for `seconds`, then writes the session in one pass so
/// the header can list every entity that appeared.
pub fn record(
    out: &Path,
    source: Source,
    seconds: f64,
    codec: Codec,
    session_id: Option<String>,
) -> anyhow::Result<()> {
    let window = Duration::try_from_secs_f64(seconds).with_context(|| format!("invalid duration {seconds}"))?;
    if out.exists() {
        bail!("{} already exists", out.display());
    }
    let (tx, rx) = mpsc::channel::<(Instant, Captured)>();
    let start = Instant::now();
    let close: Box<dyn FnOnce()> = match source {
        Source::Relay { addr, room } => {
            let mut client = RelayClient::connect(&addr, codec).with_context(|| format!("connecting to relay {addr}"))?;
            ensure_room(&mut client, &room)?;
            if let RelayEvent::Snapshot { states, .. } = client.join_and_wait(&room)? {
                for state in states {
                    let _ = tx.send((start, Captured::Pose(state)));
                }
            }
            let (sender, mut receiver) = client.split();
            std::thread::spawn(move || {
                while let Ok(event) = receiver.recv() {
                    if let RelayEvent::State { state, .. } = event {
                        if tx.send((Instant::now(), Captured::Pose(state))).is_err() {
                            break;
                        }
                    }
                }
            });
            Box::new(move || sender.close())
        }
        Source::Broker { addr, topic } => {
            let client = BridgeClient::connect(&addr, codec).with_context(|| format!("connecting to broker {addr}"))?;
            let (mut sender, mut receiver) = client.split();
            sender.subscribe(&topic, Some(1024))?;
            std::thread::spawn(move || {
                while let Ok(incoming) = receiver.recv() {
                    if let Incoming::Publish { topic, msg } = incoming {
                        if tx.send((Instant::now(), Captured::Message { topic, msg })).is_err() {
                            break;
                        }
                    }
                }
            });
            Box::new(move || sender.close())
        }
    };

    let deadline = start + window;
    let mut captured = Vec::new();
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            break;
        }
        match rx.recv_timeout(left) {
            Ok(item) => captured.push(item),
            Err(mpsc::RecvTimeoutError::Timeout) => break,
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                log::warn!("source closed the connection before the recording window ended");
                break;
            }
        }
    }
    close();

    let mut entities = BTreeMap::new();
    let events: Vec<SceneEvent> = captured
        .into_iter()
        .map(|(at, item)| {
            let t = at.saturating_duration_since(start).as_micros() as i64;
            match item {
                Captured::Pose(state) => {
                    entities.insert(state.entity_id.clone(), Role::Avatar);
                    SceneEvent::avatar(t, &state)
                }
                Captured::Message { topic, msg } => {
                    entities.insert(topic.clone(), Role::Object);
                    SceneEvent::new(t, topic, EventKind::Custom, msg)
                }
            }
        })
        .collect();

    let id = session_id.unwrap_or_else(|| {
        out.file_stem()
            .map_or_else(|| "session".into(), |s| s.to_string_lossy().into_owned())
    });
    let header = entities
        .into_iter()
        .fold(SessionHeader::new(id), |h, (entity, role)| h.with_entity(entity, role));
    let mut writer = open_session(out, &header)?;
    for event in &events {
        writer.append_event(event)?;
    }
    writer.sync()?;
    let written = writer.close()?;
    println!(
        "{}",
        json!({
            "out": out.display().to_string(),
            "events": written,
            "entities": header.entities.iter().map(|e| &e.entity_id).collect::<Vec<_>>(),
            "seconds": window.as_secs_f64(),
        })
    );
    Ok(())
}

/// Replays `input`, optionally submitting its avatar states to a relay room.
pub fn replay(
    input: &Path,
    speed: f64,
    target: Option<(String, String)>,
    codec: Codec,
    print: bool,
) -> anyhow::Result<()> {
    let reader = SessionReader::open(input).with_context(|| format!("opening {}", input.display()))?;
    let mut relay = match target {
        Some((addr, room)) => {
            let mut client =
                RelayClient::connect(&addr, codec).with_context(|| format!("connecting to relay {addr}"))?;
            ensure_room(&mut client, &room)?;
            client.join_and_wait(&room)?;
            let (sender, receiver) = client.split();
            Some((sender, receiver, room))
        }
        None => None,
    };

    let mut states_sent = 0u64;
    let summary = replay_session(&reader, speed, |event| -> anyhow::Result<()> {
        if print {
            println!("{}", encode_json(&event.to_document())?);
        }
        if let Some((sender, _, room)) = relay.as_mut() {
            if let Some(PosePayload::Avatar(state)) = event.pose() {
                sender.submit(room, &state)?;
                states_sent += 1;
            }
        }
        Ok(())
    })
    .map_err(|e| anyhow::anyhow!(e))?;

    if let Some((mut sender, _receiver, room)) = relay {
        sender.leave_room(&room)?;
        sender.close();
    }
    println!(
        "{}",
        json!({
            "in": input.display().to_string(),
            "events_emitted": summary.events_emitted,
            "states_sent": states_sent,
            "speed": if speed.is_finite() { json!(speed) } else { json!("inf") },
            "wall_duration_s": summary.wall_duration.as_secs_f64(),
            "recorded_duration_s": summary.recorded_duration_us as f64 / 1e6,
            "max_lag_ms": summary.max_lag.as_secs_f64() * 1e3,
        })
    );
    Ok(())
}
