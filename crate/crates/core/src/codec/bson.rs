//! BSON 1.1 encoding of [`Document`]s, restricted to the eight element types
//! of [`Value`].
//!
//! Decoding goes through [`RawDocument`], a borrowed view that walks elements
//! in place. The relay and the benchmark clients use it directly to peek at a
//! frame's `op` without materialising megabyte payloads.

use super::{CodecError, Document, Value};

pub const TAG_FLOAT64: u8 = 0x01;
pub const TAG_STRING: u8 = 0x02;
pub const TAG_DOCUMENT: u8 = 0x03;
pub const TAG_ARRAY: u8 = 0x04;
pub const TAG_BINARY: u8 = 0x05;
pub const TAG_BOOL: u8 = 0x08;
pub const TAG_INT32: u8 = 0x10;
pub const TAG_INT64: u8 = 0x12;

pub const BINARY_SUBTYPE_GENERIC: u8 = 0x00;

/// Largest document the signed 32-bit length field can describe.
pub const MAX_DOCUMENT_SIZE: usize = i32::MAX as usize;

/// Nesting limit applied while decoding.
pub const MAX_DEPTH: usize = 64;

const MIN_DOCUMENT_SIZE: usize = 5;

type Result<T> = std::result::Result<T, CodecError>;

/// Exact number of bytes [`encode_document`] produces for `doc`.
pub fn encoded_len(doc: &Document) -> Result<usize> {
    let mut len = MIN_DOCUMENT_SIZE;
    for (key, value) in doc.iter() {
        check_key(key)?;
        len = len.saturating_add(1 + key.len() + 1 + value_len(value)?);
    }
    Ok(len)
}

fn array_len(items: &[Value]) -> Result<usize> {
    let mut len = MIN_DOCUMENT_SIZE;
    for (i, value) in items.iter().enumerate() {
        len = len.saturating_add(1 + decimal_digits(i) + 1 + value_len(value)?);
    }
    Ok(len)
}

fn value_len(value: &Value) -> Result<usize> {
    Ok(match value {
        Value::Float64(_) | Value::Int64(_) => 8,
        Value::Int32(_) => 4,
        Value::Bool(_) => 1,
        Value::String(s) => 4 + s.len() + 1,
        Value::Binary(b) => 4 + 1 + b.len(),
        Value::Document(d) => encoded_len(d)?,
        Value::Array(a) => array_len(a)?,
    })
}

fn check_key(key: &str) -> Result<()> {
    if key.as_bytes().contains(&0) {
        return Err(CodecError::KeyContainsNul(key.to_owned()));
    }
    Ok(())
}

fn decimal_digits(mut n: usize) -> usize {
    let mut digits = 1;
    while n >= 10 {
        n /= 10;
        digits += 1;
    }
    digits
}

/// Encodes `doc` as a standalone BSON document.
pub fn encode_document(doc: &Document) -> Result<Vec<u8>> {
    encode_document_capped(doc, MAX_DOCUMENT_SIZE)
}

/// Like [`encode_document`] but refuses documents larger than `limit` bytes.
pub fn encode_document_capped(doc: &Document, limit: usize) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    encode_document_into(doc, limit, &mut out)?;
    Ok(out)
}

/// Appends the encoding of `doc` to `out`.
pub fn encode_document_into(doc: &Document, limit: usize, out: &mut Vec<u8>) -> Result<()> {
    let size = encoded_len(doc)?;
    let limit = limit.min(MAX_DOCUMENT_SIZE);
    if size > limit {
        return Err(CodecError::DocumentTooLarge { size, limit });
    }
    out.reserve(size);
    let start = out.len();
    write_document(doc, out);
    debug_assert_eq!(out.len() - start, size);
    Ok(())
}

fn begin_document(out: &mut Vec<u8>) -> usize {
    let start = out.len();
    out.extend_from_slice(&[0; 4]);
    start
}

fn end_document(out: &mut Vec<u8>, start: usize) {
    out.push(0);
    // Sizes were checked against MAX_DOCUMENT_SIZE before writing.
    let len = (out.len() - start) as i32;
    out[start..start + 4].copy_from_slice(&len.to_le_bytes());
}

fn write_document(doc: &Document, out: &mut Vec<u8>) {
    let start = begin_document(out);
    for (key, value) in doc.iter() {
        out.push(value.type_tag());
        out.extend_from_slice(key.as_bytes());
        out.push(0);
        write_value(value, out);
    }
    end_document(out, start);
}

fn write_array(items: &[Value], out: &mut Vec<u8>) {
    let start = begin_document(out);
    let mut digits = itoa_buf::Buf::new();
    for (i, value) in items.iter().enumerate() {
        out.push(value.type_tag());
        out.extend_from_slice(digits.format(i));
        out.push(0);
        write_value(value, out);
    }
    end_document(out, start);
}

fn write_value(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Float64(v) => out.extend_from_slice(&v.to_le_bytes()),
        Value::String(s) => {
            out.extend_from_slice(&((s.len() + 1) as i32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
            out.push(0);
        }
        Value::Document(d) => write_document(d, out),
        Value::Array(a) => write_array(a, out),
        Value::Binary(b) => {
            out.extend_from_slice(&(b.len() as i32).to_le_bytes());
            out.push(BINARY_SUBTYPE_GENERIC);
            out.extend_from_slice(b);
        }
        Value::Bool(b) => out.push(u8::from(*b)),
        Value::Int32(v) => out.extend_from_slice(&v.to_le_bytes()),
        Value::Int64(v) => out.extend_from_slice(&v.to_le_bytes()),
    }
}

mod itoa_buf {
    /// Formats array indices without allocating.
    pub struct Buf([u8; 20]);

    impl Buf {
        pub fn new() -> Self {
            Buf([0; 20])
        }

        pub fn format(&mut self, mut n: usize) -> &[u8] {
            let mut pos = self.0.len();
            loop {
                pos -= 1;
                self.0[pos] = b'0' + (n % 10) as u8;
                n /= 10;
                if n == 0 {
                    break;
                }
            }
            &self.0[pos..]
        }
    }
}

/// Decodes exactly one document occupying all of `data`.
pub fn decode_document(data: &[u8]) -> Result<Document> {
    RawDocument::from_bytes(data)?.to_document()
}

/// Borrowed, lazily validated view over an encoded document.
///
/// Construction checks only the outer length and terminator; element errors
/// surface while iterating.
#[derive(Clone, Copy)]
pub struct RawDocument<'a> {
    bytes: &'a [u8],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RawValue<'a> {
    Float64(f64),
    String(&'a str),
    Document(RawDocument<'a>),
    Array(RawDocument<'a>),
    Binary(&'a [u8]),
    Bool(bool),
    Int32(i32),
    Int64(i64),
}

impl<'a> RawDocument<'a> {
    /// Wraps a buffer holding exactly one encoded document.
    pub fn from_bytes(data: &'a [u8]) -> Result<Self> {
        if data.len() < 4 {
            return Err(CodecError::Truncated);
        }
        let declared = read_i32(data, 0);
        if declared < MIN_DOCUMENT_SIZE as i32 {
            return Err(CodecError::BadLength("document length below minimum"));
        }
        let declared = declared as usize;
        if declared > data.len() {
            return Err(CodecError::Truncated);
        }
        if declared < data.len() {
            return Err(CodecError::BadLength("trailing bytes after document"));
        }
        if data[declared - 1] != 0 {
            return Err(CodecError::BadLength("missing document terminator"));
        }
        Ok(RawDocument { bytes: data })
    }

    pub fn as_bytes(&self) -> &'a [u8] {
        self.bytes
    }

    pub fn iter(&self) -> RawIter<'a> {
        RawIter {
            bytes: self.bytes,
            pos: 4,
            done: false,
        }
    }

    /// First element named `key`.
    pub fn get(&self, key: &str) -> Result<Option<RawValue<'a>>> {
        for element in self.iter() {
            let (k, v) = element?;
            if k == key {
                return Ok(Some(v));
            }
        }
        Ok(None)
    }

    pub fn get_str(&self, key: &str) -> Result<Option<&'a str>> {
        Ok(match self.get(key)? {
            Some(RawValue::String(s)) => Some(s),
            _ => None,
        })
    }

    pub fn get_document(&self, key: &str) -> Result<Option<RawDocument<'a>>> {
        Ok(match self.get(key)? {
            Some(RawValue::Document(d)) => Some(d),
            _ => None,
        })
    }

    pub fn get_i64(&self, key: &str) -> Result<Option<i64>> {
        Ok(match self.get(key)? {
            Some(RawValue::Int64(v)) => Some(v),
            Some(RawValue::Int32(v)) => Some(v as i64),
            _ => None,
        })
    }

    /// Fully validating conversion to an owned [`Document`].
    pub fn to_document(&self) -> Result<Document> {
        to_owned_document(*self, 0)
    }

    /// Applies every check [`to_document`](Self::to_document) does without
    /// building the document.
    pub fn validate(&self) -> Result<()> {
        validate_document(*self, 0)
    }
}

impl PartialEq for RawDocument<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.bytes == other.bytes
    }
}

impl std::fmt::Debug for RawDocument<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RawDocument({} bytes)", self.bytes.len())
    }
}

pub struct RawIter<'a> {
    bytes: &'a [u8],
    pos: usize,
    done: bool,
}

impl<'a> RawIter<'a> {
    fn body_end(&self) -> usize {
        self.bytes.len() - 1
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.body_end())
            .ok_or(CodecError::BadLength("element overruns its document"))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn take_i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn element(&mut self) -> Result<(&'a str, RawValue<'a>)> {
        let tag = self.bytes[self.pos];
        if tag == 0 {
            return Err(CodecError::BadLength("terminator before end of document"));
        }
        self.pos += 1;
        let key_bytes = &self.bytes[self.pos..self.body_end()];
        let nul = key_bytes
            .iter()
            .position(|&b| b == 0)
            .ok_or(CodecError::BadLength("unterminated key"))?;
        let key = std::str::from_utf8(&key_bytes[..nul]).map_err(|_| CodecError::InvalidUtf8)?;
        self.pos += nul + 1;
        let value = match tag {
            TAG_FLOAT64 => RawValue::Float64(f64::from_le_bytes(self.take(8)?.try_into().unwrap())),
            TAG_STRING => {
                let len = self.take_i32()?;
                if len < 1 {
                    return Err(CodecError::BadLength("string length below one"));
                }
                let raw = self.take(len as usize)?;
                let (text, nul) = raw.split_at(raw.len() - 1);
                if nul[0] != 0 {
                    return Err(CodecError::BadLength("string missing terminator"));
                }
                RawValue::String(std::str::from_utf8(text).map_err(|_| CodecError::InvalidUtf8)?)
            }
            TAG_DOCUMENT | TAG_ARRAY => {
                let start = self.pos;
                let len = self.take_i32()?;
                if len < MIN_DOCUMENT_SIZE as i32 {
                    return Err(CodecError::BadLength("embedded document length below minimum"));
                }
                self.pos = start;
                let raw = self
                    .take(len as usize)
                    .map_err(|_| CodecError::BadLength("embedded document overruns its parent"))?;
                if raw[raw.len() - 1] != 0 {
                    return Err(CodecError::BadLength("missing document terminator"));
                }
                let doc = RawDocument { bytes: raw };
                if tag == TAG_DOCUMENT {
                    RawValue::Document(doc)
                } else {
                    RawValue::Array(doc)
                }
            }
            TAG_BINARY => {
                let len = self.take_i32()?;
                if len < 0 {
                    return Err(CodecError::BadLength("negative binary length"));
                }
                let subtype = self.take(1)?[0];
                if subtype != BINARY_SUBTYPE_GENERIC {
                    return Err(CodecError::UnsupportedBinarySubtype(subtype));
                }
                RawValue::Binary(self.take(len as usize)?)
            }
            TAG_BOOL => match self.take(1)?[0] {
                0 => RawValue::Bool(false),
                1 => RawValue::Bool(true),
                other => return Err(CodecError::InvalidBool(other)),
            },
            TAG_INT32 => RawValue::Int32(self.take_i32()?),
            TAG_INT64 => RawValue::Int64(i64::from_le_bytes(self.take(8)?.try_into().unwrap())),
            other => return Err(CodecError::UnknownTypeTag(other)),
        };
        Ok((key, value))
    }
}

impl<'a> Iterator for RawIter<'a> {
    type Item = Result<(&'a str, RawValue<'a>)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done || self.pos >= self.body_end() {
            self.done = true;
            return None;
        }
        let item = self.element();
        if item.is_err() {
            self.done = true;
        }
        Some(item)
    }
}

fn read_i32(data: &[u8], at: usize) -> i32 {
    i32::from_le_bytes(data[at..at + 4].try_into().unwrap())
}

fn to_owned_document(raw: RawDocument<'_>, depth: usize) -> Result<Document> {
    if depth >= MAX_DEPTH {
        return Err(CodecError::TooDeep(MAX_DEPTH));
    }
    let mut doc = Document::new();
    let mut seen = KeySet::default();
    for element in raw.iter() {
        let (key, value) = element?;
        if !seen.insert(key) {
            return Err(CodecError::DuplicateKey(key.to_owned()));
        }
        doc.push_unchecked(key.to_owned(), to_owned_value(value, depth)?);
    }
    Ok(doc)
}

fn to_owned_array(raw: RawDocument<'_>, depth: usize) -> Result<Vec<Value>> {
    if depth >= MAX_DEPTH {
        return Err(CodecError::TooDeep(MAX_DEPTH));
    }
    let mut items = Vec::new();
    let mut expected = itoa_buf::Buf::new();
    for element in raw.iter() {
        let (key, value) = element?;
        let index = items.len();
        if key.as_bytes() != expected.format(index) {
            return Err(CodecError::BadArrayKey {
                expected: index,
                found: key.to_owned(),
            });
        }
        items.push(to_owned_value(value, depth)?);
    }
    Ok(items)
}

fn validate_document(raw: RawDocument<'_>, depth: usize) -> Result<()> {
    if depth >= MAX_DEPTH {
        return Err(CodecError::TooDeep(MAX_DEPTH));
    }
    let mut seen = KeySet::default();
    for element in raw.iter() {
        let (key, value) = element?;
        if !seen.insert(key) {
            return Err(CodecError::DuplicateKey(key.to_owned()));
        }
        validate_value(value, depth)?;
    }
    Ok(())
}

fn validate_array(raw: RawDocument<'_>, depth: usize) -> Result<()> {
    if depth >= MAX_DEPTH {
        return Err(CodecError::TooDeep(MAX_DEPTH));
    }
    let mut expected = itoa_buf::Buf::new();
    for (index, element) in raw.iter().enumerate() {
        let (key, value) = element?;
        if key.as_bytes() != expected.format(index) {
            return Err(CodecError::BadArrayKey {
                expected: index,
                found: key.to_owned(),
            });
        }
        validate_value(value, depth)?;
    }
    Ok(())
}

fn validate_value(value: RawValue<'_>, depth: usize) -> Result<()> {
    match value {
        RawValue::Document(d) => validate_document(d, depth + 1),
        RawValue::Array(a) => validate_array(a, depth + 1),
        _ => Ok(()),
    }
}

fn to_owned_value(value: RawValue<'_>, depth: usize) -> Result<Value> {
    Ok(match value {
        RawValue::Float64(v) => Value::Float64(v),
        RawValue::String(s) => Value::String(s.to_owned()),
        RawValue::Document(d) => Value::Document(to_owned_document(d, depth + 1)?),
        RawValue::Array(a) => Value::Array(to_owned_array(a, depth + 1)?),
        RawValue::Binary(b) => Value::Binary(b.to_vec()),
        RawValue::Bool(b) => Value::Bool(b),
        RawValue::Int32(v) => Value::Int32(v),
        RawValue::Int64(v) => Value::Int64(v),
    })
}

/// Duplicate-key detection: linear for the usual handful of keys, hashed
/// beyond that.
#[derive(Default)]
struct KeySet<'a> {
    small: Vec<&'a str>,
    large: Option<std::collections::HashSet<&'a str>>,
}

impl<'a> KeySet<'a> {
    const SMALL_LIMIT: usize = 16;

    fn insert(&mut self, key: &'a str) -> bool {
        if let Some(set) = &mut self.large {
            return set.insert(key);
        }
        if self.small.contains(&key) {
            return false;
        }
        self.small.push(key);
        if self.small.len() > Self::SMALL_LIMIT {
            self.large = Some(self.small.drain(..).collect());
        }
        true
    }
}
