use crate::broker::Status;
use crate::codec::{Codec, Document, JsonHints, RawDocument, Value, decode_payload};
use crate::pose::AvatarState;

use super::{ClientId, RelayError};

pub(crate) const OP_CREATE_ROOM: &str = "create_room";
pub(crate) const OP_JOIN_ROOM: &str = "join_room";
pub(crate) const OP_LEAVE_ROOM: &str = "leave_room";
pub(crate) const OP_STATE: &str = "state";
pub(crate) const OP_ROOM_CREATED: &str = "room_created";
pub(crate) const OP_SNAPSHOT: &str = "snapshot";
pub(crate) const OP_MEMBER_JOINED: &str = "member_joined";
pub(crate) const OP_MEMBER_LEFT: &str = "member_left";
pub(crate) const OP_LEFT: &str = "left";
pub(crate) const OP_STATUS: &str = "status";

/// Client-to-relay message.
#[derive(Clone, Debug, PartialEq)]
pub enum RelayRequest {
    CreateRoom { room: String },
    JoinRoom { room: String },
    LeaveRoom { room: String },
    /// The state stays a document; the relay forwards it without rebuilding.
    State { room: String, state: Document },
}

impl RelayRequest {
    pub fn state(room: impl Into<String>, state: &AvatarState) -> Self {
        RelayRequest::State {
            room: room.into(),
            state: state.to_document(),
        }
    }

    pub fn into_document(self) -> Document {
        let (op, room, state) = match self {
            RelayRequest::CreateRoom { room } => (OP_CREATE_ROOM, room, None),
            RelayRequest::JoinRoom { room } => (OP_JOIN_ROOM, room, None),
            RelayRequest::LeaveRoom { room } => (OP_LEAVE_ROOM, room, None),
            RelayRequest::State { room, state } => (OP_STATE, room, Some(state)),
        };
        let mut d = Document::with_capacity(3);
        d.insert("op", op);
        d.insert("room", room);
        if let Some(state) = state {
            d.insert("state", state);
        }
        d
    }

    pub fn from_document(mut d: Document) -> Result<Self, RelayError> {
        let op = d
            .get_str("op")
            .ok_or_else(|| RelayError::Malformed("missing op".into()))?
            .to_owned();
        let room = d
            .get_str("room")
            .filter(|r| !r.is_empty())
            .ok_or_else(|| RelayError::Malformed("missing room".into()))?
            .to_owned();
        Ok(match op.as_str() {
            OP_CREATE_ROOM => RelayRequest::CreateRoom { room },
            OP_JOIN_ROOM => RelayRequest::JoinRoom { room },
            OP_LEAVE_ROOM => RelayRequest::LeaveRoom { room },
            OP_STATE => match d.remove("state") {
                Some(Value::Document(state)) => RelayRequest::State { room, state },
                _ => return Err(RelayError::Malformed("state op without state".into())),
            },
            _ => return Err(RelayError::UnknownOp(op)),
        })
    }
}

/// Relay-to-client message.
#[derive(Clone, Debug, PartialEq)]
pub enum RelayEvent {
    RoomCreated {
        room: String,
    },
    /// Reply to a join: the joiner's id, current members and the latest
    /// state of every entity in the room.
    Snapshot {
        room: String,
        client: ClientId,
        members: Vec<ClientId>,
        states: Vec<AvatarState>,
    },
    MemberJoined {
        room: String,
        client: ClientId,
    },
    MemberLeft {
        room: String,
        client: ClientId,
    },
    State {
        room: String,
        state: AvatarState,
    },
    Left {
        room: String,
    },
    Error(Status),
}

pub(crate) fn room_event(op: &str, room: &str, client: Option<ClientId>) -> Document {
    let mut d = Document::with_capacity(3);
    d.insert("op", op);
    d.insert("room", room);
    if let Some(client) = client {
        d.insert("client", client.0 as i64);
    }
    d
}

pub(crate) fn state_event(room: &str, state: Document) -> Document {
    let mut d = Document::with_capacity(3);
    d.insert("op", OP_STATE);
    d.insert("room", room);
    d.insert("state", state);
    d
}

pub(crate) fn snapshot_event(
    room: &str,
    client: ClientId,
    members: &[ClientId],
    states: Vec<Document>,
) -> Document {
    let mut d = room_event(OP_SNAPSHOT, room, Some(client));
    d.insert(
        "members",
        Value::Array(members.iter().map(|m| Value::Int64(m.0 as i64)).collect()),
    );
    d.insert(
        "states",
        Value::Array(states.into_iter().map(Value::Document).collect()),
    );
    d
}

fn client_field(d: &Document) -> Result<ClientId, RelayError> {
    d.get_i64("client")
        .and_then(|c| u64::try_from(c).ok())
        .map(ClientId)
        .ok_or_else(|| RelayError::Malformed("missing client".into()))
}

impl RelayEvent {
    pub fn from_document(d: Document) -> Result<Self, RelayError> {
        let op = d
            .get_str("op")
            .ok_or_else(|| RelayError::Malformed("missing op".into()))?;
        if op == OP_STATUS {
            return Status::from_document(&d)
                .map(RelayEvent::Error)
                .ok_or_else(|| RelayError::Malformed("bad status".into()));
        }
        let room = d
            .get_str("room")
            .ok_or_else(|| RelayError::Malformed("missing room".into()))?
            .to_owned();
        Ok(match op {
            OP_ROOM_CREATED => RelayEvent::RoomCreated { room },
            OP_MEMBER_JOINED => RelayEvent::MemberJoined {
                client: client_field(&d)?,
                room,
            },
            OP_MEMBER_LEFT => RelayEvent::MemberLeft {
                client: client_field(&d)?,
                room,
            },
            OP_LEFT => RelayEvent::Left { room },
            OP_STATE => {
                let state = d
                    .get_document("state")
                    .ok_or_else(|| RelayError::Malformed("state event without state".into()))?;
                RelayEvent::State {
                    state: AvatarState::from_document(state)?,
                    room,
                }
            }
            OP_SNAPSHOT => {
                let members = d
                    .get_array("members")
                    .ok_or_else(|| RelayError::Malformed("snapshot without members".into()))?
                    .iter()
                    .map(|m| m.as_i64().map(|v| ClientId(v as u64)))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| RelayError::Malformed("bad member id".into()))?;
                let states = d
                    .get_array("states")
                    .ok_or_else(|| RelayError::Malformed("snapshot without states".into()))?
                    .iter()
                    .map(|s| {
                        s.as_document()
                            .ok_or_else(|| RelayError::Malformed("bad snapshot state".into()))
                            .and_then(|s| Ok(AvatarState::from_document(s)?))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                RelayEvent::Snapshot {
                    client: client_field(&d)?,
                    room,
                    members,
                    states,
                }
            }
            other => return Err(RelayError::UnknownOp(other.to_owned())),
        })
    }

    /// Decodes one frame payload as read by a `FrameReader`.
    pub fn decode(payload: &[u8], codec: Codec) -> Result<Self, RelayError> {
        Self::from_document(decode_payload(payload, codec, &JsonHints::default())?)
    }
}

/// Reads the `op` of a frame payload without building a document when the
/// codec allows it.
pub fn peek_op(payload: &[u8], codec: Codec) -> Result<String, RelayError> {
    let op = match codec {
        Codec::Binary => RawDocument::from_bytes(payload)?
            .get_str("op")?
            .map(str::to_owned),
        Codec::Json => decode_payload(payload, codec, &JsonHints::default())?
            .get_str("op")
            .map(str::to_owned),
    };
    op.ok_or_else(|| RelayError::Malformed("missing op".into()))
}
