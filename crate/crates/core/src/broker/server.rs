use std::io::{BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::Arc;

use crate::codec::{CodecError, FrameReader};
use crate::net::{Acceptor, Spawner};

use super::outbox::Outbox;
use super::router::{Broker, TopicSummary};
use super::{BrokerConfig, BrokerError, SessionId};

/// Running broker. Dropping the handle shuts the broker down.
pub struct BrokerHandle {
    broker: Arc<Broker>,
    acceptor: Acceptor,
}

/// Binds `config.bind` and starts accepting bridge sessions.
pub fn start_broker(config: BrokerConfig) -> Result<BrokerHandle, BrokerError> {
    let broker = Broker::new(&config)?;
    let listener = TcpListener::bind(&config.bind).map_err(|source| BrokerError::BindFailed {
        addr: config.bind.clone(),
        source,
    })?;
    let acceptor = {
        let broker = broker.clone();
        Acceptor::start(listener, "broker", move |stream, spawner| {
            start_session(&broker, stream, spawner)
        })?
    };
    log::info!(
        "broker listening on {} ({} codec)",
        acceptor.local_addr(),
        config.codec
    );
    Ok(BrokerHandle { broker, acceptor })
}

fn start_session(broker: &Arc<Broker>, stream: TcpStream, spawner: &mut Spawner) -> std::io::Result<()> {
    let (id, outbox) = broker.open_session();
    log::debug!("{id} connected from {:?}", stream.peer_addr());
    let write_half = stream.try_clone()?;
    {
        let outbox = outbox.clone();
        spawner.spawn(format!("{id}-writer"), move || write_loop(write_half, &outbox))?;
    }
    let broker = broker.clone();
    spawner.spawn(format!("{id}-reader"), move || read_loop(&broker, id, stream))
}

fn read_loop(broker: &Broker, id: SessionId, stream: TcpStream) {
    let Ok(control) = stream.try_clone() else {
        broker.close_session(id);
        return;
    };
    let mut reader = FrameReader::new(BufReader::with_capacity(64 * 1024, stream), broker.codec())
        .with_max_frame(broker.max_frame());
    loop {
        let payload = match reader.read_payload() {
            Ok(payload) => payload,
            Err(CodecError::Closed) => break,
            Err(e) => {
                log::debug!("{id} stream error: {e}");
                if !matches!(e, CodecError::Io(_)) {
                    broker.report(id, &BrokerError::Codec(e));
                }
                break;
            }
        };
        if let Err(e) = broker.process_frame(id, payload) {
            log::debug!("{id}: {e}");
            broker.report(id, &e);
        }
    }
    log::debug!("{id} disconnected");
    broker.close_session(id);
    // Closing the outbox ends the writer; the read side is already done.
    let _ = control.shutdown(Shutdown::Read);
}

fn write_loop(mut stream: TcpStream, outbox: &Outbox) {
    while let Some(frame) = outbox.pop() {
        if stream.write_all(&frame).is_err() {
            break;
        }
    }
    let _ = stream.flush();
    let _ = stream.shutdown(Shutdown::Both);
}

impl BrokerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.acceptor.local_addr()
    }

    pub fn broker(&self) -> &Arc<Broker> {
        &self.broker
    }

    pub fn topic_stats(&self) -> Vec<TopicSummary> {
        self.broker.topic_stats()
    }

    pub fn session_count(&self) -> usize {
        self.broker.session_count()
    }

    /// Session reader and writer threads still running.
    pub fn connection_threads(&self) -> usize {
        self.acceptor.live_threads()
    }

    pub fn live_workers(&self) -> usize {
        self.broker.live_workers()
    }

    /// Blocks until every topic in `topics` has at least `subscribers`
    /// subscribers, or `timeout` passes. Returns whether the condition held.
    pub fn wait_for_subscribers(
        &self,
        topics: &[&str],
        subscribers: usize,
        timeout: std::time::Duration,
    ) -> bool {
        let deadline = std::time::Instant::now() + timeout;
        loop {
            let stats = self.topic_stats();
            let ready = topics.iter().all(|t| {
                stats
                    .iter()
                    .any(|s| s.name == *t && s.subscribers >= subscribers)
            });
            if ready {
                return true;
            }
            if std::time::Instant::now() >= deadline {
                return false;
            }
            std::thread::sleep(std::time::Duration::from_millis(1));
        }
    }

    /// Stops accepting, disconnects every session and joins all threads.
    pub fn shutdown(self) {
        drop(self);
    }

    /// Blocks the calling thread for the lifetime of the process.
    pub fn wait(self) {
        loop {
            std::thread::park();
        }
    }
}

impl Drop for BrokerHandle {
    fn drop(&mut self) {
        self.acceptor.shutdown();
        self.broker.shutdown();
    }
}
