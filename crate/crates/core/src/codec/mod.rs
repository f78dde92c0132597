//! Wire language shared by the broker, the relay and the session store.
//!
//! A [`Document`] encodes either as BSON ([`Codec::Binary`]) or as JSON text
//! ([`Codec::Json`]). BSON frames delimit themselves; JSON frames carry a
//! four byte little-endian length prefix.

pub mod bson;
mod document;
mod error;
mod frame;
pub mod json;

pub use bson::{RawDocument, RawValue, decode_document, encode_document, encoded_len};
pub use document::{Document, Value};
pub use error::CodecError;
pub use frame::{
    Codec, DEFAULT_MAX_FRAME, FrameReader, JSON_PREFIX_LEN, decode_payload, encode_frame,
    encode_frame_capped, read_frame, write_frame,
};
pub use json::{HintKind, JsonHints, decode_json, decode_json_with_hints, encode_json};
