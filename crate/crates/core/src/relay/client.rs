use std::io::{BufReader, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};

use crate::codec::{Codec, Document, FrameReader, encode_frame};
use crate::pose::AvatarState;

use super::RelayError;
use super::event::{RelayEvent, RelayRequest};

/// TCP connection to a relay.
pub struct RelayClient {
    sender: RelaySender,
    receiver: RelayReceiver,
}

impl RelayClient {
    pub fn connect(addr: impl ToSocketAddrs, codec: Codec) -> Result<Self, RelayError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let read_half = stream.try_clone()?;
        Ok(RelayClient {
            sender: RelaySender {
                stream,
                codec,
            },
            receiver: RelayReceiver {
                reader: FrameReader::new(BufReader::with_capacity(64 * 1024, read_half), codec),
            },
        })
    }

    pub fn sender(&mut self) -> &mut RelaySender {
        &mut self.sender
    }

    pub fn receiver(&mut self) -> &mut RelayReceiver {
        &mut self.receiver
    }

    pub fn split(self) -> (RelaySender, RelayReceiver) {
        (self.sender, self.receiver)
    }

    /// Joins `room` and waits for the snapshot, returning its events.
    pub fn join_and_wait(&mut self, room: &str) -> Result<RelayEvent, RelayError> {
        self.sender.join_room(room)?;
        loop {
            match self.receiver.recv()? {
                ev @ RelayEvent::Snapshot { .. } => return Ok(ev),
                RelayEvent::Error(status) => return Err(RelayError::Remote(status)),
                _ => {}
            }
        }
    }

    /// Creates `room` and waits for the acknowledgement.
    pub fn create_and_wait(&mut self, room: &str) -> Result<(), RelayError> {
        self.sender.create_room(room)?;
        loop {
            match self.receiver.recv()? {
                RelayEvent::RoomCreated { room: r } if r == room => return Ok(()),
                RelayEvent::Error(status) => return Err(RelayError::Remote(status)),
                _ => {}
            }
        }
    }
}

/// Write half of a [`RelayClient`].
pub struct RelaySender {
    stream: TcpStream,
    codec: Codec,
}

impl RelaySender {
    pub fn send(&mut self, request: RelayRequest) -> Result<(), RelayError> {
        self.send_document(&request.into_document())
    }

    pub fn send_document(&mut self, doc: &Document) -> Result<(), RelayError> {
        self.stream.write_all(&encode_frame(doc, self.codec)?)?;
        Ok(())
    }

    pub fn create_room(&mut self, room: &str) -> Result<(), RelayError> {
        self.send(RelayRequest::CreateRoom { room: room.into() })
    }

    pub fn join_room(&mut self, room: &str) -> Result<(), RelayError> {
        self.send(RelayRequest::JoinRoom { room: room.into() })
    }

    pub fn leave_room(&mut self, room: &str) -> Result<(), RelayError> {
        self.send(RelayRequest::LeaveRoom { room: room.into() })
    }

    pub fn submit(&mut self, room: &str, state: &AvatarState) -> Result<(), RelayError> {
        self.send(RelayRequest::state(room, state))
    }

    pub fn close(&self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

/// Read half of a [`RelayClient`].
pub struct RelayReceiver {
    reader: FrameReader<BufReader<TcpStream>>,
}

impl RelayReceiver {
    pub fn codec(&self) -> Codec {
        self.reader.codec()
    }

    /// Blocks for the next event.
    pub fn recv(&mut self) -> Result<RelayEvent, RelayError> {
        RelayEvent::from_document(self.reader.read_document()?)
    }

    /// Blocks for the next frame and returns its undecoded payload.
    pub fn recv_payload(&mut self) -> Result<&[u8], RelayError> {
        Ok(self.reader.read_payload()?)
    }
}
