use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::codec::encode_document;

use super::event::{SceneEvent, SessionHeader};
use super::{INDEX_STRIDE, StoreError, index_path};

/// Appends events to a new session file.
///
/// Frames are buffered; [`SessionWriter::close`] (or drop) flushes them and
/// the index. [`SessionWriter::sync`] forces both to stable storage.
pub struct SessionWriter {
    path: PathBuf,
    data: BufWriter<File>,
    index: BufWriter<File>,
    offset: u64,
    count: u64,
    last_t: Option<i64>,
}

/// Creates `path` and writes the header frame. Never overwrites.
pub fn open_session(path: impl AsRef<Path>, header: &SessionHeader) -> Result<SessionWriter, StoreError> {
    let path = path.as_ref().to_path_buf();
    header.validate()?;
    let file = OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(&path)
        .map_err(|e| match e.kind() {
            io::ErrorKind::AlreadyExists => StoreError::FileExists(path.clone()),
            _ => StoreError::Io(e),
        })?;
    // The index is derived data; a stale one from an earlier file is replaced.
    let index = File::create(index_path(&path))?;
    let bytes = encode_document(&header.to_document())?;
    let mut data = BufWriter::with_capacity(256 * 1024, file);
    data.write_all(&bytes)?;
    Ok(SessionWriter {
        path,
        data,
        index: BufWriter::new(index),
        offset: bytes.len() as u64,
        count: 0,
        last_t: None,
    })
}

impl SessionWriter {
    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Events appended so far.
    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn append_event(&mut self, event: &SceneEvent) -> Result<(), StoreError> {
        if let Some(previous) = self.last_t {
            if event.t < previous {
                return Err(StoreError::NonMonotonicTimestamp { previous, t: event.t });
            }
        }
        event.validate()?;
        let bytes = encode_document(&event.to_document())?;
        if self.count % INDEX_STRIDE == 0 {
            self.index.write_all(&(self.count as i64).to_le_bytes())?;
            self.index.write_all(&(self.offset as i64).to_le_bytes())?;
        }
        self.data.write_all(&bytes)?;
        self.offset += bytes.len() as u64;
        self.count += 1;
        self.last_t = Some(event.t);
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), StoreError> {
        self.data.flush()?;
        self.index.flush()?;
        Ok(())
    }

    /// Flushes and fsyncs the session and its index.
    pub fn sync(&mut self) -> Result<(), StoreError> {
        self.flush()?;
        self.data.get_ref().sync_data()?;
        self.index.get_ref().sync_data()?;
        Ok(())
    }

    /// Flushes everything and returns the number of events written.
    pub fn close(mut self) -> Result<u64, StoreError> {
        self.flush()?;
        Ok(self.count)
    }
}

impl Drop for SessionWriter {
    fn drop(&mut self) {
        if let Err(e) = self.flush() {
            log::error!("flushing {}: {e}", self.path.display());
        }
    }
}
