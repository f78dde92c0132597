use std::fs::File;
use std::io::{BufReader, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use crate::codec::{Codec, CodecError, FrameReader, RawDocument, decode_document};

use super::event::{SceneEvent, SessionHeader};
use super::{INDEX_STRIDE, StoreError, index_path};

/// One index entry: the event at `ordinal` starts at byte `offset` and has
/// timestamp `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexEntry {
    pub ordinal: i64,
    pub offset: u64,
    pub t: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndexSource {
    /// Read from the side file.
    Loaded,
    /// Side file missing or inconsistent; rebuilt by scanning the session.
    Rebuilt,
}

/// Read access to a closed session file. Every query opens its own file
/// handle, so one reader can serve several threads.
#[derive(Debug)]
pub struct SessionReader {
    path: PathBuf,
    header: SessionHeader,
    data_start: u64,
    index: Vec<IndexEntry>,
    index_source: IndexSource,
}

impl SessionReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut frames = FrameReader::new(BufReader::new(File::open(&path)?), Codec::Binary);
        let header_bytes = frames
            .read_payload()
            .map_err(|e| corrupt(0, e))?;
        let data_start = header_bytes.len() as u64;
        let header = SessionHeader::from_document(&frames.decode_last().map_err(|e| corrupt(0, e))?)?;
        let mut reader = SessionReader {
            path,
            header,
            data_start,
            index: Vec::new(),
            index_source: IndexSource::Loaded,
        };
        match reader.load_index() {
            Some(index) => reader.index = index,
            None => {
                reader.index = reader.rebuild_index()?;
                reader.index_source = IndexSource::Rebuilt;
            }
        }
        Ok(reader)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn header(&self) -> &SessionHeader {
        &self.header
    }

    pub fn index(&self) -> &[IndexEntry] {
        &self.index
    }

    pub fn index_source(&self) -> IndexSource {
        self.index_source
    }

    /// All events in file order. Iteration stops after the first error.
    pub fn events(&self) -> Result<EventIter, StoreError> {
        self.events_from(self.data_start)
    }

    fn events_from(&self, offset: u64) -> Result<EventIter, StoreError> {
        let mut file = File::open(&self.path)?;
        file.seek(SeekFrom::Start(offset))?;
        Ok(EventIter {
            frames: FrameReader::new(BufReader::with_capacity(64 * 1024, file), Codec::Binary),
            offset,
            skip_before: None,
            done: false,
        })
    }

    pub fn read_all(&self) -> Result<Vec<SceneEvent>, StoreError> {
        self.events()?.collect()
    }

    /// Events with `t0 <= t <= t1`, in file order. Starts from the last
    /// indexed event strictly before `t0`.
    pub fn query_range(&self, t0: i64, t1: i64) -> Result<Vec<SceneEvent>, StoreError> {
        if t0 > t1 {
            return Ok(Vec::new());
        }
        let start = match self.index.partition_point(|e| e.t < t0) {
            0 => self.data_start,
            k => self.index[k - 1].offset,
        };
        let mut events = self.events_from(start)?;
        events.skip_before = Some(t0);
        collect_range(events, t0, t1)
    }

    /// Same result as [`SessionReader::query_range`] without using the index.
    pub fn query_range_scan(&self, t0: i64, t1: i64) -> Result<Vec<SceneEvent>, StoreError> {
        if t0 > t1 {
            return Ok(Vec::new());
        }
        collect_range(self.events()?, t0, t1)
    }

    /// Reads the side index, or `None` if it is missing or disagrees with
    /// the session file.
    fn load_index(&self) -> Option<Vec<IndexEntry>> {
        let mut raw = Vec::new();
        File::open(index_path(&self.path)).ok()?.read_to_end(&mut raw).ok()?;
        if raw.len() % 16 != 0 {
            return None;
        }
        let file_len = std::fs::metadata(&self.path).ok()?.len();
        let mut file = File::open(&self.path).ok()?;
        let mut index = Vec::with_capacity(raw.len() / 16);
        let mut previous_offset = None;
        for (k, pair) in raw.chunks_exact(16).enumerate() {
            let ordinal = i64::from_le_bytes(pair[..8].try_into().unwrap());
            let offset = i64::from_le_bytes(pair[8..].try_into().unwrap());
            let offset = u64::try_from(offset).ok()?;
            if ordinal != k as i64 * INDEX_STRIDE as i64
                || offset < self.data_start
                || offset >= file_len
                || previous_offset.is_some_and(|p| offset <= p)
            {
                return None;
            }
            previous_offset = Some(offset);
            let t = read_t_at(&mut file, offset).ok()?;
            index.push(IndexEntry { ordinal, offset, t });
        }
        if index.first().is_some_and(|e| e.offset != self.data_start) {
            return None;
        }
        Some(index)
    }

    fn rebuild_index(&self) -> Result<Vec<IndexEntry>, StoreError> {
        let mut file = File::open(&self.path)?;
        file.seek(SeekFrom::Start(self.data_start))?;
        let mut frames = FrameReader::new(BufReader::with_capacity(64 * 1024, file), Codec::Binary);
        let mut index = Vec::new();
        let mut offset = self.data_start;
        let mut ordinal = 0i64;
        loop {
            let payload = match frames.read_payload() {
                Ok(p) => p,
                Err(CodecError::Closed) => break,
                Err(e) => return Err(corrupt(offset, e)),
            };
            if ordinal % INDEX_STRIDE as i64 == 0 {
                let t = raw_t(payload).map_err(|e| corrupt(offset, e))?;
                index.push(IndexEntry { ordinal, offset, t });
            }
            offset += payload.len() as u64;
            ordinal += 1;
        }
        Ok(index)
    }
}

fn collect_range(events: EventIter, t0: i64, t1: i64) -> Result<Vec<SceneEvent>, StoreError> {
    let mut out = Vec::new();
    for event in events {
        let event = event?;
        if event.t > t1 {
            break;
        }
        if event.t >= t0 {
            out.push(event);
        }
    }
    Ok(out)
}

fn corrupt(offset: u64, e: impl std::fmt::Display) -> StoreError {
    StoreError::CorruptFrame {
        offset,
        reason: e.to_string(),
    }
}

fn raw_t(payload: &[u8]) -> Result<i64, CodecError> {
    RawDocument::from_bytes(payload)?
        .get_i64("t")?
        .ok_or(CodecError::BadLength("event without t"))
}

fn read_t_at(file: &mut File, offset: u64) -> Result<i64, CodecError> {
    file.seek(SeekFrom::Start(offset))?;
    let mut frames = FrameReader::new(&mut *file, Codec::Binary);
    raw_t(frames.read_payload()?)
}

/// Iterator over a session's events. Yields at most one error, then stops.
pub struct EventIter {
    frames: FrameReader<BufReader<File>>,
    offset: u64,
    /// Frames with an earlier `t` are passed over without a full decode.
    skip_before: Option<i64>,
    done: bool,
}

impl EventIter {
    /// Byte offset of the next frame.
    pub fn offset(&self) -> u64 {
        self.offset
    }
}

impl Iterator for EventIter {
    type Item = Result<SceneEvent, StoreError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut at = self.offset;
        let result = loop {
            let payload = match self.frames.read_payload() {
                Ok(payload) => payload,
                Err(CodecError::Closed) => {
                    self.done = true;
                    return None;
                }
                Err(e) => break Err(corrupt(at, e)),
            };
            self.offset += payload.len() as u64;
            if let Some(t0) = self.skip_before {
                match raw_t(payload) {
                    Ok(t) if t < t0 => {
                        at = self.offset;
                        continue;
                    }
                    Ok(_) => self.skip_before = None,
                    Err(e) => break Err(corrupt(at, e)),
                }
            }
            break decode_document(payload)
                .map_err(|e| corrupt(at, e))
                .and_then(|d| SceneEvent::from_document(d).map_err(|e| corrupt(at, e)));
        };
        if result.is_err() {
            self.done = true;
        }
        Some(result)
    }
}
