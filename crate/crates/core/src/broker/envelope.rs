use std::fmt;
use std::str::FromStr;

use crate::codec::{Document, RawDocument, RawValue, Value};

use super::BrokerError;

pub const FIELD_OP: &str = "op";
pub const FIELD_TOPIC: &str = "topic";
pub const FIELD_TYPE: &str = "type";
pub const FIELD_MSG: &str = "msg";
pub const FIELD_QUEUE_LENGTH: &str = "queue_length";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    Advertise,
    Unadvertise,
    Publish,
    Subscribe,
    Unsubscribe,
}

impl Op {
    pub fn as_str(self) -> &'static str {
        match self {
            Op::Advertise => "advertise",
            Op::Unadvertise => "unadvertise",
            Op::Publish => "publish",
            Op::Subscribe => "subscribe",
            Op::Unsubscribe => "unsubscribe",
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Op {
    type Err = BrokerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "advertise" => Op::Advertise,
            "unadvertise" => Op::Unadvertise,
            "publish" => Op::Publish,
            "subscribe" => Op::Subscribe,
            "unsubscribe" => Op::Unsubscribe,
            other => return Err(BrokerError::UnknownOp(other.to_owned())),
        })
    }
}

/// One bridge protocol operation.
#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    pub op: Op,
    pub topic: String,
    pub type_name: Option<String>,
    pub msg: Option<Document>,
    pub queue_length: Option<i32>,
}

impl Envelope {
    fn bare(op: Op, topic: impl Into<String>) -> Self {
        Envelope {
            op,
            topic: topic.into(),
            type_name: None,
            msg: None,
            queue_length: None,
        }
    }

    pub fn advertise(topic: impl Into<String>, type_name: impl Into<String>) -> Self {
        Envelope {
            type_name: Some(type_name.into()),
            ..Self::bare(Op::Advertise, topic)
        }
    }

    pub fn unadvertise(topic: impl Into<String>) -> Self {
        Self::bare(Op::Unadvertise, topic)
    }

    pub fn publish(topic: impl Into<String>, msg: Document) -> Self {
        Envelope {
            msg: Some(msg),
            ..Self::bare(Op::Publish, topic)
        }
    }

    pub fn subscribe(topic: impl Into<String>, queue_length: Option<i32>) -> Self {
        Envelope {
            queue_length,
            ..Self::bare(Op::Subscribe, topic)
        }
    }

    pub fn unsubscribe(topic: impl Into<String>) -> Self {
        Self::bare(Op::Unsubscribe, topic)
    }

    /// Checks the envelope invariants.
    pub fn validate(&self) -> Result<(), BrokerError> {
        validate_topic(&self.topic)?;
        match (self.op, &self.msg) {
            (Op::Publish, None) => return Err(malformed("publish requires msg")),
            (op, Some(_)) if op != Op::Publish => {
                return Err(malformed(format!("{op} must not carry msg")));
            }
            _ => {}
        }
        if let Some(q) = self.queue_length {
            if self.op != Op::Subscribe {
                return Err(malformed("queue_length is only valid on subscribe"));
            }
            if q < 1 {
                return Err(malformed(format!("queue_length must be positive, got {q}")));
            }
        }
        Ok(())
    }

    pub fn into_document(self) -> Document {
        let mut doc = Document::with_capacity(5);
        doc.insert(FIELD_OP, self.op.as_str());
        doc.insert(FIELD_TOPIC, self.topic);
        if let Some(t) = self.type_name {
            doc.insert(FIELD_TYPE, t);
        }
        if let Some(m) = self.msg {
            doc.insert(FIELD_MSG, m);
        }
        if let Some(q) = self.queue_length {
            doc.insert(FIELD_QUEUE_LENGTH, q);
        }
        doc
    }

    /// Parses and validates an incoming document. Unknown extra fields are
    /// ignored, as rosbridge clients routinely send `id`.
    pub fn from_document(mut doc: Document) -> Result<Self, BrokerError> {
        let op: Op = match doc.get(FIELD_OP) {
            Some(Value::String(s)) => s.parse()?,
            Some(_) => return Err(malformed("op must be a string")),
            None => return Err(malformed("missing op")),
        };
        let topic = match doc.remove(FIELD_TOPIC) {
            Some(Value::String(s)) => s,
            Some(_) => return Err(malformed("topic must be a string")),
            None => return Err(malformed("missing topic")),
        };
        let type_name = match doc.remove(FIELD_TYPE) {
            Some(Value::String(s)) => Some(s),
            Some(_) => return Err(malformed("type must be a string")),
            None => None,
        };
        let msg = match doc.remove(FIELD_MSG) {
            Some(Value::Document(d)) => Some(d),
            Some(_) => return Err(malformed("msg must be a document")),
            None => None,
        };
        let queue_length = match doc.get(FIELD_QUEUE_LENGTH) {
            Some(v) => Some(
                v.as_i32()
                    .ok_or_else(|| malformed("queue_length must be a 32-bit integer"))?,
            ),
            None => None,
        };
        let env = Envelope {
            op,
            topic,
            type_name,
            msg,
            queue_length,
        };
        env.validate()?;
        Ok(env)
    }
}

/// Parses a BINARY envelope without copying `msg`, which is only checked
/// structurally. The returned envelope's `msg` is an empty placeholder.
pub(crate) fn header_from_raw(raw: &RawDocument<'_>) -> Result<Envelope, BrokerError> {
    raw.validate()?;
    let mut header = Document::with_capacity(5);
    for element in raw.iter() {
        let (key, value) = element?;
        let value = match (key, value) {
            (FIELD_MSG, RawValue::Document(_)) => Value::Document(Document::new()),
            (FIELD_OP | FIELD_TOPIC | FIELD_TYPE, RawValue::String(s)) => Value::String(s.to_owned()),
            (FIELD_QUEUE_LENGTH, RawValue::Int32(q)) => Value::Int32(q),
            (FIELD_QUEUE_LENGTH, RawValue::Int64(q)) => Value::Int64(q),
            (FIELD_OP | FIELD_TOPIC | FIELD_TYPE | FIELD_MSG | FIELD_QUEUE_LENGTH, _) => {
                // Wrong type; from_document reports it.
                Value::Bool(false)
            }
            _ => continue,
        };
        header.insert(key, value);
    }
    Envelope::from_document(header)
}

pub fn validate_topic(topic: &str) -> Result<(), BrokerError> {
    if topic.is_empty() {
        return Err(malformed("topic is empty"));
    }
    if !topic.starts_with('/') {
        return Err(malformed(format!("topic {topic:?} must begin with '/'")));
    }
    if topic.chars().any(char::is_whitespace) {
        return Err(malformed(format!("topic {topic:?} contains whitespace")));
    }
    Ok(())
}

fn malformed(reason: impl Into<String>) -> BrokerError {
    BrokerError::MalformedEnvelope(reason.into())
}

/// In-band status report `{op: "status", level, msg, code}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Status {
    pub level: String,
    pub msg: String,
    /// Machine-readable error name, e.g. `TypeConflict`.
    pub code: Option<String>,
}

impl Status {
    pub fn error(code: &str, msg: impl Into<String>) -> Self {
        Status {
            level: "error".into(),
            msg: msg.into(),
            code: Some(code.into()),
        }
    }

    pub fn to_document(&self) -> Document {
        let mut doc = Document::with_capacity(4);
        doc.insert(FIELD_OP, "status");
        doc.insert("level", self.level.as_str());
        doc.insert(FIELD_MSG, self.msg.as_str());
        if let Some(code) = &self.code {
            doc.insert("code", code.as_str());
        }
        doc
    }

    pub fn from_document(doc: &Document) -> Option<Self> {
        if doc.get_str(FIELD_OP) != Some("status") {
            return None;
        }
        Some(Status {
            level: doc.get_str("level").unwrap_or("info").to_owned(),
            msg: doc.get_str(FIELD_MSG).unwrap_or_default().to_owned(),
            code: doc.get_str("code").map(str::to_owned),
        })
    }
}
