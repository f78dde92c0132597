use std::io::{BufReader, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::thread::JoinHandle;

use crossbeam_channel::Receiver;

use crate::codec::{
    Codec, CodecError, DEFAULT_MAX_FRAME, Document, FrameReader, JsonHints, Value, encode_frame_capped,
};

use super::BrokerError;
use super::envelope::{Envelope, FIELD_MSG, FIELD_OP, FIELD_TOPIC, Op, Status};

/// A frame received from the broker.
#[derive(Clone, Debug, PartialEq)]
pub enum Incoming {
    Publish { topic: String, msg: Document },
    Status(Status),
    Other(Document),
}

impl Incoming {
    fn classify(mut doc: Document) -> Incoming {
        match doc.get_str(FIELD_OP) {
            Some("status") => match Status::from_document(&doc) {
                Some(status) => Incoming::Status(status),
                None => Incoming::Other(doc),
            },
            Some(op) if op == Op::Publish.as_str() => {
                let topic = doc.get_str(FIELD_TOPIC).filter(|t| !t.is_empty()).map(str::to_owned);
                match (topic, doc.get_document(FIELD_MSG).is_some()) {
                    (Some(topic), true) => match doc.remove(FIELD_MSG) {
                        Some(Value::Document(msg)) => Incoming::Publish { topic, msg },
                        _ => unreachable!("msg checked above"),
                    },
                    _ => Incoming::Other(doc),
                }
            }
            _ => Incoming::Other(doc),
        }
    }
}

/// TCP connection to a broker.
pub struct BridgeClient {
    sender: BridgeSender,
    receiver: BridgeReceiver,
}

impl BridgeClient {
    pub fn connect(addr: impl ToSocketAddrs, codec: Codec) -> Result<Self, BrokerError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let read_half = stream.try_clone()?;
        Ok(BridgeClient {
            sender: BridgeSender {
                stream,
                codec,
                max_frame: DEFAULT_MAX_FRAME,
            },
            receiver: BridgeReceiver {
                reader: FrameReader::new(BufReader::with_capacity(64 * 1024, read_half), codec),
            },
        })
    }

    /// Decode hints applied to incoming JSON frames.
    pub fn with_json_hints(mut self, hints: JsonHints) -> Self {
        self.receiver.reader.set_json_hints(hints);
        self
    }

    pub fn sender(&mut self) -> &mut BridgeSender {
        &mut self.sender
    }

    pub fn receiver(&mut self) -> &mut BridgeReceiver {
        &mut self.receiver
    }

    pub fn split(self) -> (BridgeSender, BridgeReceiver) {
        (self.sender, self.receiver)
    }
}

/// Write half of a [`BridgeClient`].
pub struct BridgeSender {
    stream: TcpStream,
    codec: Codec,
    max_frame: usize,
}

impl BridgeSender {
    pub fn send(&mut self, env: Envelope) -> Result<(), BrokerError> {
        env.validate()?;
        self.send_document(&env.into_document())
    }

    /// Sends an arbitrary document, bypassing envelope validation.
    pub fn send_document(&mut self, doc: &Document) -> Result<(), BrokerError> {
        let bytes = encode_frame_capped(doc, self.codec, self.max_frame)?;
        self.send_raw(&bytes)
    }

    /// Writes pre-encoded frame bytes.
    pub fn send_raw(&mut self, frame: &[u8]) -> Result<(), BrokerError> {
        self.stream.write_all(frame)?;
        Ok(())
    }

    pub fn advertise(&mut self, topic: &str, type_name: &str) -> Result<(), BrokerError> {
        self.send(Envelope::advertise(topic, type_name))
    }

    pub fn unadvertise(&mut self, topic: &str) -> Result<(), BrokerError> {
        self.send(Envelope::unadvertise(topic))
    }

    pub fn publish(&mut self, topic: &str, msg: Document) -> Result<(), BrokerError> {
        self.send(Envelope::publish(topic, msg))
    }

    pub fn subscribe(&mut self, topic: &str, queue_length: Option<i32>) -> Result<(), BrokerError> {
        self.send(Envelope::subscribe(topic, queue_length))
    }

    pub fn unsubscribe(&mut self, topic: &str) -> Result<(), BrokerError> {
        self.send(Envelope::unsubscribe(topic))
    }

    pub fn codec(&self) -> Codec {
        self.codec
    }

    /// Closes both directions; a blocked receiver returns `Closed`.
    pub fn close(&self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

/// Read half of a [`BridgeClient`].
pub struct BridgeReceiver {
    reader: FrameReader<BufReader<TcpStream>>,
}

impl BridgeReceiver {
    /// Blocks for the next frame. `CodecError::Closed` once the broker hangs up.
    pub fn recv(&mut self) -> Result<Incoming, BrokerError> {
        Ok(Incoming::classify(self.reader.read_document()?))
    }

    /// Reads the next frame without decoding it and returns its payload size.
    pub fn recv_raw(&mut self) -> Result<usize, BrokerError> {
        Ok(self.reader.read_payload()?.len())
    }

    /// Decodes the frame most recently returned by [`recv_raw`](Self::recv_raw).
    pub fn decode_last(&self) -> Result<Incoming, BrokerError> {
        Ok(Incoming::classify(self.reader.decode_last()?))
    }

    /// Moves the receiver onto a thread that forwards every frame into a
    /// channel. The channel disconnects when the connection closes.
    pub fn into_channel(mut self) -> (Receiver<Incoming>, JoinHandle<()>) {
        let (tx, rx) = crossbeam_channel::unbounded();
        let handle = std::thread::Builder::new()
            .name("bridge-recv".into())
            .spawn(move || {
                loop {
                    match self.recv() {
                        Ok(incoming) => {
                            if tx.send(incoming).is_err() {
                                break;
                            }
                        }
                        Err(BrokerError::Codec(CodecError::Closed)) => break,
                        Err(e) => {
                            log::debug!("bridge receiver stopped: {e}");
                            break;
                        }
                    }
                }
            })
            .expect("spawn receiver thread");
        (rx, handle)
    }
}
