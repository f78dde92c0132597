use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use crossbeam_channel::Receiver;
use parking_lot::{Mutex, RwLock};

use crate::broker::Status;
use crate::codec::{Codec, Document, encode_frame};
use crate::pose::AvatarState;

use super::event::{
    OP_LEFT, OP_MEMBER_JOINED, OP_MEMBER_LEFT, OP_ROOM_CREATED, RelayEvent, RelayRequest,
    room_event, snapshot_event, state_event,
};
use super::sink::Sink;
use super::{ClientId, RelayError};

/// One relay-to-client message, encoded at most once however many members
/// receive it.
pub(crate) struct Outgoing {
    doc: Document,
    frame: OnceLock<Option<Vec<u8>>>,
}

impl Outgoing {
    fn new(doc: Document) -> Arc<Self> {
        Arc::new(Outgoing {
            doc,
            frame: OnceLock::new(),
        })
    }

    /// Wire bytes, or `None` if the document cannot be encoded.
    pub fn frame(&self, codec: Codec) -> Option<&[u8]> {
        self.frame
            .get_or_init(|| match encode_frame(&self.doc, codec) {
                Ok(bytes) => Some(bytes),
                Err(e) => {
                    log::warn!("cannot encode relay event: {e}");
                    None
                }
            })
            .as_deref()
    }
}

struct Stored {
    sequence: i64,
    event: Arc<Outgoing>,
}

#[derive(Default)]
struct RoomState {
    members: BTreeMap<ClientId, Sink>,
    owners: HashMap<String, ClientId>,
    last: BTreeMap<String, Stored>,
}

impl RoomState {
    fn broadcast(&self, except: ClientId, event: &Arc<Outgoing>) -> usize {
        let mut sent = 0;
        for (id, sink) in &self.members {
            if *id != except && sink.send(event.clone()).is_ok() {
                sent += 1;
            }
        }
        sent
    }
}

struct Room {
    id: String,
    // The room's executor: every mutation and fan-out for this room happens
    // under this lock, which gives all members the same order.
    state: Mutex<RoomState>,
}

struct ClientEntry {
    sink: Sink,
    rooms: BTreeSet<String>,
}

/// Membership and entity listing returned by a join.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub members: Vec<ClientId>,
    pub entities: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Submitted {
    /// Accepted and queued for this many other members.
    Forwarded(usize),
    /// Sequence not newer than the last accepted one; discarded.
    Stale,
}

/// Room registry and fan-out, independent of the transport.
pub struct Relay {
    codec: Codec,
    rooms: RwLock<HashMap<String, Arc<Room>>>,
    clients: Mutex<HashMap<ClientId, ClientEntry>>,
    next_client: AtomicU64,
}

impl Relay {
    pub fn new(codec: Codec) -> Arc<Self> {
        Arc::new(Relay {
            codec,
            rooms: RwLock::default(),
            clients: Mutex::default(),
            next_client: AtomicU64::new(1),
        })
    }

    pub fn codec(&self) -> Codec {
        self.codec
    }

    pub(crate) fn open_client(&self, sink: Sink) -> ClientId {
        let id = ClientId(self.next_client.fetch_add(1, Ordering::Relaxed));
        self.clients.lock().insert(
            id,
            ClientEntry {
                sink,
                rooms: BTreeSet::new(),
            },
        );
        id
    }

    pub fn connect_local(self: &Arc<Self>) -> LocalClient {
        let (tx, rx) = crossbeam_channel::unbounded();
        let id = self.open_client(Sink::Channel(tx));
        LocalClient {
            relay: self.clone(),
            id,
            rx,
        }
    }

    fn sink(&self, client: ClientId) -> Option<Sink> {
        self.clients.lock().get(&client).map(|e| e.sink.clone())
    }

    fn room(&self, room_id: &str) -> Result<Arc<Room>, RelayError> {
        self.rooms
            .read()
            .get(room_id)
            .cloned()
            .ok_or_else(|| RelayError::NoSuchRoom(room_id.to_owned()))
    }

    pub(crate) fn notify(&self, client: ClientId, doc: Document) {
        if let Some(sink) = self.sink(client) {
            let _ = sink.send(Outgoing::new(doc));
        }
    }

    /// Queues an error status for `client`.
    pub(crate) fn report(&self, client: ClientId, error: &RelayError) {
        self.notify(client, Status::error(error.code(), error.to_string()).to_document());
    }

    pub fn create_room(&self, room_id: &str) -> Result<(), RelayError> {
        if room_id.is_empty() {
            return Err(RelayError::Malformed("empty room id".into()));
        }
        let mut rooms = self.rooms.write();
        if rooms.contains_key(room_id) {
            return Err(RelayError::RoomExists(room_id.to_owned()));
        }
        rooms.insert(
            room_id.to_owned(),
            Arc::new(Room {
                id: room_id.to_owned(),
                state: Mutex::default(),
            }),
        );
        Ok(())
    }

    /// Adds `client` to the room. The client's first event from the room is
    /// the snapshot; the other members are told about the join.
    pub fn join_room(&self, client: ClientId, room_id: &str) -> Result<Snapshot, RelayError> {
        let room = self.room(room_id)?;
        let sink = self
            .sink(client)
            .ok_or_else(|| RelayError::Malformed(format!("{client} is not connected")))?;
        let snapshot = {
            let mut state = room.state.lock();
            if state.members.contains_key(&client) {
                return Err(RelayError::AlreadyMember {
                    room: room.id.clone(),
                    client,
                });
            }
            state.members.insert(client, sink.clone());
            let members: Vec<ClientId> = state.members.keys().copied().collect();
            let states = state
                .last
                .values()
                .filter_map(|s| s.event.doc.get_document("state").cloned())
                .collect();
            let _ = sink.send(Outgoing::new(snapshot_event(&room.id, client, &members, states)));
            state.broadcast(
                client,
                &Outgoing::new(room_event(OP_MEMBER_JOINED, &room.id, Some(client))),
            );
            Snapshot {
                members,
                entities: state.last.keys().cloned().collect(),
            }
        };
        if let Some(entry) = self.clients.lock().get_mut(&client) {
            entry.rooms.insert(room.id.clone());
        }
        Ok(snapshot)
    }

    pub fn leave_room(&self, client: ClientId, room_id: &str) -> Result<(), RelayError> {
        let room = self.room(room_id)?;
        self.remove_member(&room, client)?;
        if let Some(entry) = self.clients.lock().get_mut(&client) {
            entry.rooms.remove(room_id);
            let _ = entry.sink.send(Outgoing::new(room_event(OP_LEFT, room_id, None)));
        }
        Ok(())
    }

    fn remove_member(&self, room: &Room, client: ClientId) -> Result<(), RelayError> {
        let mut state = room.state.lock();
        if state.members.remove(&client).is_none() {
            return Err(RelayError::NotMember {
                room: room.id.clone(),
                client,
            });
        }
        state.owners.retain(|_, owner| *owner != client);
        state.broadcast(
            client,
            &Outgoing::new(room_event(OP_MEMBER_LEFT, &room.id, Some(client))),
        );
        Ok(())
    }

    /// Validates `state` and forwards it to every other member of the room.
    ///
    /// The first accepted state for an entity claims it for the submitter
    /// until they leave. Sequences must increase per entity except on a fresh
    /// claim, which restarts the count.
    pub fn submit_state(
        &self,
        client: ClientId,
        room_id: &str,
        state: Document,
    ) -> Result<Submitted, RelayError> {
        let parsed = AvatarState::from_document(&state)?;
        let room = self.room(room_id)?;
        let mut room_state = room.state.lock();
        if !room_state.members.contains_key(&client) {
            return Err(RelayError::NotMember {
                room: room.id.clone(),
                client,
            });
        }
        let fresh_claim = match room_state.owners.get(&parsed.entity_id) {
            Some(owner) if *owner != client => {
                return Err(RelayError::NotOwner {
                    entity: parsed.entity_id,
                    owner: *owner,
                });
            }
            Some(_) => false,
            None => true,
        };
        if !fresh_claim
            && room_state
                .last
                .get(&parsed.entity_id)
                .is_some_and(|s| parsed.sequence <= s.sequence)
        {
            return Ok(Submitted::Stale);
        }
        if fresh_claim {
            room_state.owners.insert(parsed.entity_id.clone(), client);
        }
        let event = Outgoing::new(state_event(&room.id, state));
        let sent = room_state.broadcast(client, &event);
        room_state.last.insert(
            parsed.entity_id,
            Stored {
                sequence: parsed.sequence,
                event,
            },
        );
        Ok(Submitted::Forwarded(sent))
    }

    /// Applies one decoded request on behalf of `client`.
    pub fn handle(&self, client: ClientId, request: RelayRequest) -> Result<(), RelayError> {
        match request {
            RelayRequest::CreateRoom { room } => {
                self.create_room(&room)?;
                self.notify(client, room_event(OP_ROOM_CREATED, &room, None));
            }
            RelayRequest::JoinRoom { room } => {
                self.join_room(client, &room)?;
            }
            RelayRequest::LeaveRoom { room } => self.leave_room(client, &room)?,
            RelayRequest::State { room, state } => {
                self.submit_state(client, &room, state)?;
            }
        }
        Ok(())
    }

    /// Drops the client from every room, releasing what it owned.
    pub fn disconnect(&self, client: ClientId) {
        let Some(entry) = self.clients.lock().remove(&client) else {
            return;
        };
        for room_id in entry.rooms {
            if let Ok(room) = self.room(&room_id) {
                let _ = self.remove_member(&room, client);
            }
        }
        entry.sink.close();
    }

    pub fn room_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.rooms.read().keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn members(&self, room_id: &str) -> Result<Vec<ClientId>, RelayError> {
        Ok(self.room(room_id)?.state.lock().members.keys().copied().collect())
    }

    pub fn owner(&self, room_id: &str, entity: &str) -> Result<Option<ClientId>, RelayError> {
        Ok(self.room(room_id)?.state.lock().owners.get(entity).copied())
    }

    /// Latest accepted state per entity.
    pub fn last_states(&self, room_id: &str) -> Result<Vec<Document>, RelayError> {
        let room = self.room(room_id)?;
        let state = room.state.lock();
        Ok(state
            .last
            .values()
            .filter_map(|s| s.event.doc.get_document("state").cloned())
            .collect())
    }

    pub fn client_count(&self) -> usize {
        self.clients.lock().len()
    }

    /// Disconnects every client.
    pub fn shutdown(&self) {
        let ids: Vec<ClientId> = self.clients.lock().keys().copied().collect();
        for id in ids {
            self.disconnect(id);
        }
    }
}

/// In-process relay client.
pub struct LocalClient {
    relay: Arc<Relay>,
    id: ClientId,
    rx: Receiver<Arc<Outgoing>>,
}

impl LocalClient {
    pub fn id(&self) -> ClientId {
        self.id
    }

    pub fn create_room(&self, room: &str) -> Result<(), RelayError> {
        self.relay.create_room(room)
    }

    pub fn join_room(&self, room: &str) -> Result<Snapshot, RelayError> {
        self.relay.join_room(self.id, room)
    }

    pub fn leave_room(&self, room: &str) -> Result<(), RelayError> {
        self.relay.leave_room(self.id, room)
    }

    pub fn submit(&self, room: &str, state: &AvatarState) -> Result<Submitted, RelayError> {
        self.relay.submit_state(self.id, room, state.to_document())
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<RelayEvent> {
        let out = self.rx.recv_timeout(timeout).ok()?;
        RelayEvent::from_document(out.doc.clone()).ok()
    }

    pub fn try_recv(&self) -> Option<RelayEvent> {
        let out = self.rx.try_recv().ok()?;
        RelayEvent::from_document(out.doc.clone()).ok()
    }

    /// Every event queued so far.
    pub fn drain(&self) -> Vec<RelayEvent> {
        std::iter::from_fn(|| self.try_recv()).collect()
    }
}

impl Drop for LocalClient {
    fn drop(&mut self) {
        self.relay.disconnect(self.id);
    }
}
