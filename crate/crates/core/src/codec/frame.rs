use std::fmt;
use std::io::{self, Read, Write};
use std::str::FromStr;

use super::bson::{self, MAX_DOCUMENT_SIZE};
use super::json::{self, JsonHints};
use super::{CodecError, Document};

/// Default cap on a single frame accepted by servers.
pub const DEFAULT_MAX_FRAME: usize = 64 * 1024 * 1024;

/// Length prefix carried by JSON frames.
pub const JSON_PREFIX_LEN: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Codec {
    /// BSON documents, self-delimiting through their leading length.
    #[default]
    Binary,
    /// UTF-8 JSON text behind a little-endian u32 length prefix.
    Json,
}

impl Codec {
    pub fn as_str(self) -> &'static str {
        match self {
            Codec::Binary => "binary",
            Codec::Json => "json",
        }
    }
}

impl fmt::Display for Codec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Codec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "binary" | "bson" => Ok(Codec::Binary),
            "json" => Ok(Codec::Json),
            other => Err(format!("unknown codec {other:?} (expected binary or json)")),
        }
    }
}

/// Complete wire bytes for one frame.
pub fn encode_frame(doc: &Document, codec: Codec) -> Result<Vec<u8>, CodecError> {
    encode_frame_capped(doc, codec, MAX_DOCUMENT_SIZE)
}

pub fn encode_frame_capped(
    doc: &Document,
    codec: Codec,
    limit: usize,
) -> Result<Vec<u8>, CodecError> {
    match codec {
        Codec::Binary => bson::encode_document_capped(doc, limit),
        Codec::Json => {
            let text = json::encode_json(doc)?;
            if text.len() > limit.min(u32::MAX as usize) {
                return Err(CodecError::DocumentTooLarge {
                    size: text.len(),
                    limit,
                });
            }
            let mut out = Vec::with_capacity(JSON_PREFIX_LEN + text.len());
            out.extend_from_slice(&(text.len() as u32).to_le_bytes());
            out.extend_from_slice(text.as_bytes());
            Ok(out)
        }
    }
}

/// Appends exactly one frame to `sink`.
pub fn write_frame<W: Write + ?Sized>(
    sink: &mut W,
    doc: &Document,
    codec: Codec,
) -> Result<(), CodecError> {
    let bytes = encode_frame(doc, codec)?;
    sink.write_all(&bytes)?;
    Ok(())
}

/// Reads exactly one frame from `source`.
pub fn read_frame<R: Read>(source: R, codec: Codec) -> Result<Document, CodecError> {
    FrameReader::new(source, codec).read_document()
}

/// Decodes a payload returned by [`FrameReader::read_payload`].
pub fn decode_payload(
    payload: &[u8],
    codec: Codec,
    hints: &JsonHints,
) -> Result<Document, CodecError> {
    match codec {
        Codec::Binary => bson::decode_document(payload),
        Codec::Json => json::decode_json_bytes(payload, hints),
    }
}

/// Frame reader over a blocking byte stream.
///
/// Reading is split in two steps so that a caller can tell stream failures,
/// after which the stream is unusable, from payload decode failures, after
/// which the next frame is still readable.
pub struct FrameReader<R> {
    inner: R,
    codec: Codec,
    max_frame: usize,
    hints: JsonHints,
    buf: Vec<u8>,
    len: usize,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R, codec: Codec) -> Self {
        FrameReader {
            inner,
            codec,
            max_frame: MAX_DOCUMENT_SIZE,
            hints: JsonHints::default(),
            buf: Vec::new(),
            len: 0,
        }
    }

    pub fn with_max_frame(mut self, max_frame: usize) -> Self {
        self.max_frame = max_frame;
        self
    }

    pub fn with_json_hints(mut self, hints: JsonHints) -> Self {
        self.hints = hints;
        self
    }

    pub fn set_json_hints(&mut self, hints: JsonHints) {
        self.hints = hints;
    }

    pub fn codec(&self) -> Codec {
        self.codec
    }

    pub fn get_ref(&self) -> &R {
        &self.inner
    }

    pub fn into_inner(self) -> R {
        self.inner
    }

    /// Reads the next frame's payload: the whole BSON document, or the JSON
    /// text without its prefix.
    ///
    /// Returns [`CodecError::Closed`] on a clean end of stream at a frame
    /// boundary and [`CodecError::Truncated`] if the stream ends mid-frame.
    pub fn read_payload(&mut self) -> Result<&[u8], CodecError> {
        let mut header = [0u8; 4];
        match read_full(&mut self.inner, &mut header)? {
            0 => return Err(CodecError::Closed),
            4 => {}
            _ => return Err(CodecError::Truncated),
        }
        let (len, start) = match self.codec {
            Codec::Binary => {
                let declared = i32::from_le_bytes(header);
                if declared < 5 {
                    return Err(CodecError::BadLength("document length below minimum"));
                }
                (declared as usize, 4)
            }
            Codec::Json => (u32::from_le_bytes(header) as usize, 0),
        };
        if len > self.max_frame {
            return Err(CodecError::FrameTooLarge {
                len,
                limit: self.max_frame,
            });
        }
        if self.buf.len() < len {
            self.buf.resize(len, 0);
        }
        if self.codec == Codec::Binary {
            self.buf[..4].copy_from_slice(&header);
        }
        let want = len - start;
        if read_full(&mut self.inner, &mut self.buf[start..len])? != want {
            return Err(CodecError::Truncated);
        }
        self.len = len;
        Ok(&self.buf[..len])
    }

    /// Decodes the payload most recently returned by `read_payload`.
    pub fn decode_last(&self) -> Result<Document, CodecError> {
        decode_payload(&self.buf[..self.len], self.codec, &self.hints)
    }

    pub fn read_document(&mut self) -> Result<Document, CodecError> {
        self.read_payload()?;
        self.decode_last()
    }
}

fn read_full<R: Read + ?Sized>(reader: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc;

    #[test]
    fn empty_document_frame_sizes() {
        let mut sink = Vec::new();
        write_frame(&mut sink, &Document::new(), Codec::Binary).unwrap();
        assert_eq!(sink.len(), 5);
        let mut sink = Vec::new();
        write_frame(&mut sink, &Document::new(), Codec::Json).unwrap();
        assert_eq!(sink.len(), 4 + 2);
        assert_eq!(&sink, &[2, 0, 0, 0, b'{', b'}']);
    }

    #[test]
    fn closed_mid_frame_is_truncated() {
        let bytes = [5u8, 0, 0];
        assert!(matches!(
            read_frame(&bytes[..], Codec::Binary),
            Err(CodecError::Truncated)
        ));
        let bytes = [6u8, 0, 0, 0, 0];
        assert!(matches!(
            read_frame(&bytes[..], Codec::Binary),
            Err(CodecError::Truncated)
        ));
        assert!(matches!(
            read_frame(&[][..], Codec::Binary),
            Err(CodecError::Closed)
        ));
    }

    #[test]
    fn oversized_frame_rejected() {
        let frame = encode_frame(&doc! { "b" => crate::codec::Value::Binary(vec![0; 64]) }, Codec::Binary)
            .unwrap();
        let mut reader = FrameReader::new(&frame[..], Codec::Binary).with_max_frame(32);
        assert!(matches!(
            reader.read_payload(),
            Err(CodecError::FrameTooLarge { .. })
        ));
    }

    #[test]
    fn decode_error_leaves_stream_usable() {
        let mut stream = Vec::new();
        stream.extend_from_slice(&[2, 0, 0, 0, b'[', b']']);
        write_frame(&mut stream, &doc! { "ok" => true }, Codec::Json).unwrap();
        let mut reader = FrameReader::new(&stream[..], Codec::Json);
        assert!(matches!(reader.read_document(), Err(CodecError::NotAnObject)));
        assert_eq!(reader.read_document().unwrap(), doc! { "ok" => true });
        assert!(matches!(reader.read_document(), Err(CodecError::Closed)));
    }

    #[test]
    fn codec_names() {
        assert_eq!("binary".parse::<Codec>().unwrap(), Codec::Binary);
        assert_eq!("JSON".parse::<Codec>().unwrap(), Codec::Json);
        assert!("xml".parse::<Codec>().is_err());
    }
}
