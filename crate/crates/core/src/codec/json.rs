//! JSON text encoding, the baseline the binary codec is measured against.
//!
//! Binary values travel as base64 strings and 64-bit integers outside the
//! range a double represents exactly travel as decimal strings. Neither is
//! recoverable from the text alone, so decoding takes optional [`JsonHints`].

use std::fmt;

use base64::Engine;
use base64::engine::general_purpose::STANDARD as BASE64;
use serde::de::{self, DeserializeSeed, MapAccess, SeqAccess, Visitor};
use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Deserializer, Serialize, Serializer};

use super::{CodecError, Document, Value};

/// Largest magnitude an Int64 may have and still be emitted as a JSON number.
pub const MAX_EXACT_INT: i64 = 1 << 53;

type Result<T> = std::result::Result<T, CodecError>;

pub fn encode_json(doc: &Document) -> Result<String> {
    validate_for_json(doc)?;
    serde_json::to_string(&JsonDocument(doc)).map_err(|e| CodecError::Parse(e.to_string()))
}

fn validate_for_json(doc: &Document) -> Result<()> {
    for (key, value) in doc.iter() {
        if key.as_bytes().contains(&0) {
            return Err(CodecError::KeyContainsNul(key.to_owned()));
        }
        validate_value(key, value)?;
    }
    Ok(())
}

fn validate_value(key: &str, value: &Value) -> Result<()> {
    match value {
        Value::Float64(v) if !v.is_finite() => Err(CodecError::NonFiniteFloat(key.to_owned())),
        Value::Document(d) => validate_for_json(d),
        Value::Array(items) => items.iter().try_for_each(|v| validate_value(key, v)),
        _ => Ok(()),
    }
}

struct JsonDocument<'a>(&'a Document);
struct JsonValue<'a>(&'a Value);

impl Serialize for JsonDocument<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (key, value) in self.0.iter() {
            map.serialize_entry(key, &JsonValue(value))?;
        }
        map.end()
    }
}

impl Serialize for JsonValue<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Value::Float64(v) => serializer.serialize_f64(*v),
            Value::String(s) => serializer.serialize_str(s),
            Value::Document(d) => JsonDocument(d).serialize(serializer),
            Value::Array(items) => {
                let mut seq = serializer.serialize_seq(Some(items.len()))?;
                for item in items {
                    seq.serialize_element(&JsonValue(item))?;
                }
                seq.end()
            }
            Value::Binary(b) => serializer.serialize_str(&BASE64.encode(b)),
            Value::Bool(b) => serializer.serialize_bool(*b),
            Value::Int32(v) => serializer.serialize_i32(*v),
            Value::Int64(v) if (-MAX_EXACT_INT..=MAX_EXACT_INT).contains(v) => {
                serializer.serialize_i64(*v)
            }
            Value::Int64(v) => serializer.collect_str(v),
        }
    }
}

/// Decodes a JSON object without type hints.
pub fn decode_json(text: &str) -> Result<Document> {
    decode_json_with_hints(text, &JsonHints::default())
}

pub fn decode_json_bytes(text: &[u8], hints: &JsonHints) -> Result<Document> {
    let mut de = serde_json::Deserializer::from_slice(text);
    let value = ValueSeed
        .deserialize(&mut de)
        .and_then(|v| de.end().map(|_| v))
        .map_err(|e| CodecError::Parse(e.to_string()))?;
    let Value::Document(mut doc) = value else {
        return Err(CodecError::NotAnObject);
    };
    hints.apply(&mut doc)?;
    Ok(doc)
}

pub fn decode_json_with_hints(text: &str, hints: &JsonHints) -> Result<Document> {
    decode_json_bytes(text.as_bytes(), hints)
}

struct ValueSeed;

impl<'de> DeserializeSeed<'de> for ValueSeed {
    type Value = Value;

    fn deserialize<D: Deserializer<'de>>(self, deserializer: D) -> std::result::Result<Value, D::Error> {
        deserializer.deserialize_any(ValueVisitor)
    }
}

struct ValueVisitor;

impl<'de> Visitor<'de> for ValueVisitor {
    type Value = Value;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a JSON value other than null")
    }

    fn visit_bool<E: de::Error>(self, v: bool) -> std::result::Result<Value, E> {
        Ok(Value::Bool(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Value, E> {
        Ok(Value::Int64(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Value, E> {
        i64::try_from(v)
            .map(Value::Int64)
            .map_err(|_| E::custom(format!("integer {v} does not fit in 64 signed bits")))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Value, E> {
        Ok(Value::Float64(v))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Value, E> {
        Ok(Value::String(v.to_owned()))
    }

    fn visit_string<E: de::Error>(self, v: String) -> std::result::Result<Value, E> {
        Ok(Value::String(v))
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Value, A::Error> {
        let mut items = Vec::with_capacity(seq.size_hint().unwrap_or(0));
        while let Some(item) = seq.next_element_seed(ValueSeed)? {
            items.push(item);
        }
        Ok(Value::Array(items))
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Value, A::Error> {
        let mut doc = Document::new();
        while let Some(key) = map.next_key::<String>()? {
            if key.as_bytes().contains(&0) {
                return Err(de::Error::custom(format!("key {key:?} contains a NUL byte")));
            }
            if doc.contains_key(&key) {
                return Err(de::Error::custom(format!("duplicate key {key:?}")));
            }
            let value = map.next_value_seed(ValueSeed)?;
            doc.push_unchecked(key, value);
        }
        Ok(Value::Document(doc))
    }
}

/// Type to restore at a path when decoding JSON.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HintKind {
    /// base64 string → Binary
    Binary,
    /// number or decimal string → Int64
    Int64,
    /// number → Int32
    Int32,
}

/// Slash-separated paths (`msg/rgb`, `joints/*/joint_id`) with the type each
/// should decode to. `*` matches any key or array index.
#[derive(Clone, Debug, Default)]
pub struct JsonHints {
    rules: Vec<(Vec<String>, HintKind)>,
}

impl JsonHints {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, path: &str, kind: HintKind) -> Self {
        self.rules
            .push((path.split('/').map(str::to_owned).collect(), kind));
        self
    }

    pub fn binary(self, path: &str) -> Self {
        self.with(path, HintKind::Binary)
    }

    pub fn int64(self, path: &str) -> Self {
        self.with(path, HintKind::Int64)
    }

    pub fn int32(self, path: &str) -> Self {
        self.with(path, HintKind::Int32)
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn apply(&self, doc: &mut Document) -> Result<()> {
        for (path, kind) in &self.rules {
            apply_in_document(doc, path, *kind)?;
        }
        Ok(())
    }
}

fn apply_in_document(doc: &mut Document, path: &[String], kind: HintKind) -> Result<()> {
    let Some((head, rest)) = path.split_first() else {
        return Ok(());
    };
    for (key, value) in doc.iter_mut() {
        if head == "*" || head == key {
            apply_at(value, rest, kind)?;
        }
    }
    Ok(())
}

fn apply_at(value: &mut Value, path: &[String], kind: HintKind) -> Result<()> {
    let Some((head, rest)) = path.split_first() else {
        return convert(value, kind);
    };
    match value {
        Value::Document(doc) => apply_in_document(doc, path, kind),
        Value::Array(items) => {
            for (i, item) in items.iter_mut().enumerate() {
                if head == "*" || head.parse() == Ok(i) {
                    apply_at(item, rest, kind)?;
                }
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

fn convert(value: &mut Value, kind: HintKind) -> Result<()> {
    let converted = match (kind, &*value) {
        (HintKind::Binary, Value::Binary(_))
        | (HintKind::Int64, Value::Int64(_))
        | (HintKind::Int32, Value::Int32(_)) => return Ok(()),
        (HintKind::Binary, Value::String(s)) => Value::Binary(
            BASE64
                .decode(s)
                .map_err(|e| CodecError::Parse(format!("invalid base64: {e}")))?,
        ),
        (HintKind::Int64, Value::String(s)) => Value::Int64(
            s.parse()
                .map_err(|_| CodecError::Parse(format!("{s:?} is not a 64-bit integer")))?,
        ),
        (HintKind::Int64, Value::Int32(v)) => Value::Int64(*v as i64),
        (HintKind::Int32, Value::Int64(v)) => Value::Int32(
            i32::try_from(*v)
                .map_err(|_| CodecError::Parse(format!("{v} does not fit in 32 bits")))?,
        ),
        (kind, other) => {
            return Err(CodecError::Parse(format!(
                "hint {kind:?} cannot apply to {other:?}"
            )));
        }
    };
    *value = converted;
    Ok(())
}
