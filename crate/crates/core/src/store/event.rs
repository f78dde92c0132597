use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::codec::{Document, Value};
use crate::pose::{AvatarState, RigidPose};

use super::StoreError;

pub const FORMAT_VERSION: i32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    Pose,
    ObjectState,
    Utterance,
    TaskMarker,
    Custom,
}

impl EventKind {
    pub const ALL: [EventKind; 5] = [
        EventKind::Pose,
        EventKind::ObjectState,
        EventKind::Utterance,
        EventKind::TaskMarker,
        EventKind::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Pose => "POSE",
            EventKind::ObjectState => "OBJECT_STATE",
            EventKind::Utterance => "UTTERANCE",
            EventKind::TaskMarker => "TASK_MARKER",
            EventKind::Custom => "CUSTOM",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| StoreError::InvalidEvent(format!("unknown kind {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaskMarker {
    Start,
    Complete,
    Abort,
}

impl TaskMarker {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskMarker::Start => "task_start",
            TaskMarker::Complete => "task_complete",
            TaskMarker::Abort => "task_abort",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [TaskMarker::Start, TaskMarker::Complete, TaskMarker::Abort]
            .into_iter()
            .find(|m| m.as_str() == s)
    }
}

/// Pose carried by a POSE event.
#[derive(Clone, Debug, PartialEq)]
pub enum PosePayload {
    Avatar(AvatarState),
    Rigid(RigidPose),
}

impl PosePayload {
    pub fn from_document(d: &Document) -> Result<Self, StoreError> {
        if d.contains_key("joints") {
            Ok(PosePayload::Avatar(AvatarState::from_document(d)?))
        } else {
            Ok(PosePayload::Rigid(RigidPose::from_document(d)?))
        }
    }

    /// Joint `joint_id` of an avatar, or the body itself for a rigid pose
    /// when `joint_id` is 0.
    pub fn joint(&self, joint_id: usize) -> Option<RigidPose> {
        match self {
            PosePayload::Avatar(a) => a.joint(joint_id).map(|j| j.rigid()),
            PosePayload::Rigid(r) => (joint_id == 0).then_some(*r),
        }
    }
}

/// One recorded occurrence.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneEvent {
    /// Microseconds since session start.
    pub t: i64,
    pub entity_id: String,
    pub kind: EventKind,
    pub payload: Document,
}

impl SceneEvent {
    pub fn new(t: i64, entity_id: impl Into<String>, kind: EventKind, payload: Document) -> Self {
        SceneEvent {
            t,
            entity_id: entity_id.into(),
            kind,
            payload,
        }
    }

    pub fn avatar(t: i64, state: &AvatarState) -> Self {
        SceneEvent::new(t, state.entity_id.clone(), EventKind::Pose, state.to_document())
    }

    pub fn rigid(t: i64, entity_id: impl Into<String>, pose: &RigidPose) -> Self {
        SceneEvent::new(t, entity_id, EventKind::Pose, pose.to_document())
    }

    pub fn utterance(t: i64, entity_id: impl Into<String>, speaker: &str, text: &str) -> Self {
        let mut payload = Document::with_capacity(2);
        payload.insert("speaker", speaker);
        payload.insert("text", text);
        SceneEvent::new(t, entity_id, EventKind::Utterance, payload)
    }

    pub fn task_marker(t: i64, entity_id: impl Into<String>, marker: TaskMarker) -> Self {
        let mut payload = Document::with_capacity(1);
        payload.insert("marker", marker.as_str());
        SceneEvent::new(t, entity_id, EventKind::TaskMarker, payload)
    }

    /// Checks the per-kind payload rules.
    pub fn validate(&self) -> Result<(), StoreError> {
        if self.t < 0 {
            return Err(StoreError::InvalidEvent(format!("negative timestamp {}", self.t)));
        }
        match self.kind {
            EventKind::Pose => {
                PosePayload::from_document(&self.payload)?;
            }
            EventKind::Utterance => {
                if self.payload.get_str("speaker").is_none() || self.payload.get_str("text").is_none() {
                    return Err(StoreError::InvalidEvent(
                        "utterance needs string speaker and text".into(),
                    ));
                }
            }
            EventKind::TaskMarker => {
                self.marker().ok_or_else(|| {
                    StoreError::InvalidEvent("task marker must be task_start, task_complete or task_abort".into())
                })?;
            }
            EventKind::ObjectState | EventKind::Custom => {}
        }
        Ok(())
    }

    pub fn pose(&self) -> Option<PosePayload> {
        (self.kind == EventKind::Pose)
            .then(|| PosePayload::from_document(&self.payload).ok())
            .flatten()
    }

    pub fn marker(&self) -> Option<TaskMarker> {
        (self.kind == EventKind::TaskMarker)
            .then(|| self.payload.get_str("marker").and_then(TaskMarker::parse))
            .flatten()
    }

    /// Speaker of an utterance.
    pub fn speaker(&self) -> Option<&str> {
        (self.kind == EventKind::Utterance)
            .then(|| self.payload.get_str("speaker"))
            .flatten()
    }

    pub fn to_document(&self) -> Document {
        let mut d = Document::with_capacity(4);
        d.insert("t", self.t);
        d.insert("entity_id", self.entity_id.as_str());
        d.insert("kind", self.kind.as_str());
        d.insert("payload", self.payload.clone());
        d
    }

    pub fn from_document(mut d: Document) -> Result<Self, StoreError> {
        let t = d
            .get_i64("t")
            .ok_or_else(|| StoreError::InvalidEvent("missing t".into()))?;
        let entity_id = match d.remove("entity_id") {
            Some(Value::String(s)) => s,
            _ => return Err(StoreError::InvalidEvent("missing entity_id".into())),
        };
        let kind = d
            .get_str("kind")
            .ok_or_else(|| StoreError::InvalidEvent("missing kind".into()))?
            .parse()?;
        let payload = match d.remove("payload") {
            Some(Value::Document(p)) => p,
            _ => return Err(StoreError::InvalidEvent("missing payload".into())),
        };
        Ok(SceneEvent {
            t,
            entity_id,
            kind,
            payload,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Robot,
    Avatar,
    Object,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Robot => "ROBOT",
            Role::Avatar => "AVATAR",
            Role::Object => "OBJECT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Role::Robot, Role::Avatar, Role::Object]
            .into_iter()
            .find(|r| r.as_str() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntityInfo {
    pub entity_id: String,
    pub role: Role,
}

/// First frame of every session file.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionHeader {
    pub session_id: String,
    /// UTC microseconds.
    pub created_at: i64,
    pub format_version: i32,
    pub entities: Vec<EntityInfo>,
    pub annotations: Document,
}

impl SessionHeader {
    /// Header stamped with the current time and no entities.
    pub fn new(session_id: impl Into<String>) -> Self {
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_micros() as i64);
        SessionHeader {
            session_id: session_id.into(),
            created_at,
            format_version: FORMAT_VERSION,
            entities: Vec::new(),
            annotations: Document::new(),
        }
    }

    pub fn with_entity(mut self, entity_id: impl Into<String>, role: Role) -> Self {
        self.entities.push(EntityInfo {
            entity_id: entity_id.into(),
            role,
        });
        self
    }

    pub fn entity(&self, entity_id: &str) -> Option<&EntityInfo> {
        self.entities.iter().find(|e| e.entity_id == entity_id)
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        if self.format_version != FORMAT_VERSION {
            return Err(StoreError::InvalidHeader(format!(
                "format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let mut seen = HashSet::new();
        for e in &self.entities {
            if !seen.insert(e.entity_id.as_str()) {
                return Err(StoreError::InvalidHeader(format!("duplicate entity {:?}", e.entity_id)));
            }
        }
        Ok(())
    }

    pub fn to_document(&self) -> Document {
        let entities = self
            .entities
            .iter()
            .map(|e| {
                let mut d = Document::with_capacity(2);
                d.insert("entity_id", e.entity_id.as_str());
                d.insert("role", e.role.as_str());
                Value::Document(d)
            })
            .collect::<Vec<_>>();
        let mut d = Document::with_capacity(5);
        d.insert("session_id", self.session_id.as_str());
        d.insert("created_at", self.created_at);
        d.insert("format_version", self.format_version);
        d.insert("entities", entities);
        d.insert("annotations", self.annotations.clone());
        d
    }

    pub fn from_document(d: &Document) -> Result<Self, StoreError> {
        let bad = |what: &str| StoreError::InvalidHeader(format!("missing or invalid {what}"));
        let entities = d
            .get_array("entities")
            .ok_or_else(|| bad("entities"))?
            .iter()
            .map(|v| {
                let e = v.as_document().ok_or_else(|| bad("entity"))?;
                Ok(EntityInfo {
                    entity_id: e.get_str("entity_id").ok_or_else(|| bad("entity_id"))?.to_owned(),
                    role: e.get_str("role").and_then(Role::parse).ok_or_else(|| bad("role"))?,
                })
            })
            .collect::<Result<Vec<_>, StoreError>>()?;
        let header = SessionHeader {
            session_id: d.get_str("session_id").ok_or_else(|| bad("session_id"))?.to_owned(),
            created_at: d.get_i64("created_at").ok_or_else(|| bad("created_at"))?,
            format_version: d.get_i32("format_version").ok_or_else(|| bad("format_version"))?,
            entities,
            annotations: d.get_document("annotations").cloned().unwrap_or_default(),
        };
        header.validate()?;
        Ok(header)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_document_round_trip() {
        let e = SceneEvent::utterance(5, "robot", "robot", "hello");
        assert_eq!(SceneEvent::from_document(e.to_document()).unwrap(), e);
        let a = SceneEvent::avatar(7, &AvatarState::neutral("avatar"));
        assert_eq!(SceneEvent::from_document(a.to_document()).unwrap(), a);
    }

    #[test]
    fn payload_rules() {
        assert!(SceneEvent::utterance(0, "r", "r", "hi").validate().is_ok());
        let mut e = SceneEvent::utterance(0, "r", "r", "hi");
        e.payload.remove("text");
        assert!(matches!(e.validate(), Err(StoreError::InvalidEvent(_))));
        let mut m = SceneEvent::task_marker(0, "judge", TaskMarker::Start);
        assert_eq!(m.marker(), Some(TaskMarker::Start));
        m.payload.insert("marker", "task_paused");
        assert!(m.validate().is_err());
        let bad_pose = SceneEvent::new(0, "box", EventKind::Pose, Document::new());
        assert!(matches!(bad_pose.validate(), Err(StoreError::InvalidPose(_))));
        let neg = SceneEvent::new(-1, "x", EventKind::Custom, Document::new());
        assert!(neg.validate().is_err());
        assert!(SceneEvent::rigid(0, "box", &RigidPose::at([1.0, 2.0, 3.0])).validate().is_ok());
    }

    #[test]
    fn header_round_trip_and_rules() {
        let h = SessionHeader::new("s1")
            .with_entity("robot", Role::Robot)
            .with_entity("avatar", Role::Avatar);
        assert_eq!(SessionHeader::from_document(&h.to_document()).unwrap(), h);
        let dup = h.clone().with_entity("robot", Role::Object);
        assert!(dup.validate().is_err());
        let mut v2 = h;
        v2.format_version = 2;
        assert!(v2.validate().is_err());
    }
}
