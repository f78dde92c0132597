use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("key {0:?} contains a NUL byte")]
    KeyContainsNul(String),
    #[error("encoded document is {size} bytes, limit is {limit}")]
    DocumentTooLarge { size: usize, limit: usize },
    #[error("input ends before the document does")]
    Truncated,
    #[error("inconsistent length: {0}")]
    BadLength(&'static str),
    #[error("unknown element type tag 0x{0:02x}")]
    UnknownTypeTag(u8),
    #[error("string is not valid UTF-8")]
    InvalidUtf8,
    #[error("duplicate key {0:?}")]
    DuplicateKey(String),
    #[error("array key {found:?} where {expected} was expected")]
    BadArrayKey { expected: usize, found: String },
    #[error("unsupported binary subtype 0x{0:02x}")]
    UnsupportedBinarySubtype(u8),
    #[error("invalid boolean byte 0x{0:02x}")]
    InvalidBool(u8),
    #[error("documents nested deeper than {0} levels")]
    TooDeep(usize),
    #[error("JSON text is not an object")]
    NotAnObject,
    #[error("JSON parse error: {0}")]
    Parse(String),
    #[error("key {0:?} holds a non-finite float, which JSON cannot represent")]
    NonFiniteFloat(String),
    #[error("frame of {len} bytes exceeds the {limit} byte limit")]
    FrameTooLarge { len: usize, limit: usize },
    #[error("stream closed")]
    Closed,
    #[error(transparent)]
    Io(#[from] io::Error),
}
