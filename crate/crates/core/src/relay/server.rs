use std::io::BufReader;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::Arc;

use crate::codec::{Codec, CodecError, DEFAULT_MAX_FRAME, FrameReader};
use crate::net::{Acceptor, Spawner};

use super::event::RelayRequest;
use super::room::Relay;
use super::sink::{Sink, SocketSink};
use super::{ClientId, RelayError};

#[derive(Clone, Debug)]
pub struct RelayConfig {
    pub bind: String,
    pub codec: Codec,
    pub max_frame: usize,
}

impl Default for RelayConfig {
    fn default() -> Self {
        RelayConfig {
            bind: "127.0.0.1:0".into(),
            codec: Codec::Binary,
            max_frame: DEFAULT_MAX_FRAME,
        }
    }
}

/// Running relay. Dropping the handle stops it.
pub struct RelayHandle {
    relay: Arc<Relay>,
    acceptor: Acceptor,
}

pub fn start_relay(config: RelayConfig) -> Result<RelayHandle, RelayError> {
    let relay = Relay::new(config.codec);
    let listener = TcpListener::bind(&config.bind).map_err(|source| RelayError::BindFailed {
        addr: config.bind.clone(),
        source,
    })?;
    let max_frame = config.max_frame;
    let acceptor = {
        let relay = relay.clone();
        Acceptor::start(listener, "relay", move |stream, spawner| {
            start_client(&relay, stream, max_frame, spawner)
        })?
    };
    log::info!("relay listening on {}", acceptor.local_addr());
    Ok(RelayHandle { relay, acceptor })
}

fn start_client(
    relay: &Arc<Relay>,
    stream: TcpStream,
    max_frame: usize,
    spawner: &mut Spawner,
) -> std::io::Result<()> {
    let sink = SocketSink::new(stream.try_clone()?, relay.codec());
    let id = relay.open_client(Sink::Socket(sink.clone()));
    spawner.spawn(format!("{id}-writer"), move || sink.run_writer())?;
    let relay = relay.clone();
    spawner.spawn(format!("{id}-reader"), move || {
        read_loop(&relay, id, stream, max_frame)
    })
}

fn read_loop(relay: &Relay, id: ClientId, stream: TcpStream, max_frame: usize) {
    let Ok(control) = stream.try_clone() else {
        relay.disconnect(id);
        return;
    };
    let mut reader = FrameReader::new(BufReader::with_capacity(64 * 1024, stream), relay.codec())
        .with_max_frame(max_frame);
    loop {
        match reader.read_payload() {
            Ok(_) => {}
            Err(CodecError::Closed) => break,
            Err(e) => {
                if !matches!(e, CodecError::Io(_)) {
                    relay.report(id, &RelayError::Codec(e));
                }
                break;
            }
        }
        let outcome = reader
            .decode_last()
            .map_err(RelayError::from)
            .and_then(RelayRequest::from_document)
            .and_then(|req| relay.handle(id, req));
        if let Err(e) = outcome {
            log::debug!("{id}: {e}");
            relay.report(id, &e);
        }
    }
    log::debug!("{id} disconnected");
    relay.disconnect(id);
    let _ = control.shutdown(Shutdown::Read);
}

impl RelayHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.acceptor.local_addr()
    }

    pub fn relay(&self) -> &Arc<Relay> {
        &self.relay
    }

    pub fn connection_threads(&self) -> usize {
        self.acceptor.live_threads()
    }

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

impl Drop for RelayHandle {
    fn drop(&mut self) {
        // Disconnecting first ends the writers; the acceptor then closes the
        // sockets and joins the readers.
        self.relay.shutdown();
        self.acceptor.shutdown();
    }
}
