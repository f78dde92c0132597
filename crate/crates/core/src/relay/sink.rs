use std::collections::VecDeque;
use std::io::{self, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::Arc;

use crossbeam_channel::Sender;
use parking_lot::{Condvar, Mutex};

use crate::codec::Codec;

use super::room::Outgoing;

/// Where a member's events go.
#[derive(Clone)]
pub(crate) enum Sink {
    /// In-process client.
    Channel(Sender<Arc<Outgoing>>),
    Socket(Arc<SocketSink>),
}

impl Sink {
    /// Queues or writes `event`. Fails once the client is gone.
    pub fn send(&self, event: Arc<Outgoing>) -> Result<(), ()> {
        match self {
            Sink::Channel(tx) => tx.send(event).map_err(|_| ()),
            Sink::Socket(s) => s.send(event),
        }
    }

    /// No more events will be sent; a socket writer finishes its queue and
    /// exits.
    pub fn close(&self) {
        if let Sink::Socket(s) = self {
            s.close();
        }
    }
}

#[derive(Default)]
struct Pending {
    /// Events not yet fully written, with the offset already sent.
    queue: VecDeque<(Arc<Outgoing>, usize)>,
    /// Someone is writing to the socket right now.
    busy: bool,
    closed: bool,
}

/// Output side of one TCP client.
///
/// The room executor writes straight into the socket when nothing is queued
/// and the kernel buffer takes the whole frame without blocking. Anything
/// left over goes to the client's writer thread, so a stalled reader only
/// ever delays itself.
pub(crate) struct SocketSink {
    codec: Codec,
    stream: TcpStream,
    pending: Mutex<Pending>,
    ready: Condvar,
}

impl SocketSink {
    pub fn new(stream: TcpStream, codec: Codec) -> Arc<Self> {
        Arc::new(SocketSink {
            codec,
            stream,
            pending: Mutex::default(),
            ready: Condvar::new(),
        })
    }

    fn send(&self, event: Arc<Outgoing>) -> Result<(), ()> {
        let mut pending = self.pending.lock();
        if pending.closed {
            return Err(());
        }
        if pending.busy || !pending.queue.is_empty() {
            pending.queue.push_back((event, 0));
            // A busy executor hands over when it finishes.
            if !pending.busy {
                self.ready.notify_one();
            }
            return Ok(());
        }
        pending.busy = true;
        drop(pending);

        let written = match event.frame(self.codec) {
            Some(frame) => match send_nowait(&self.stream, frame) {
                Ok(n) => Some(n).filter(|&n| n < frame.len()),
                Err(_) => {
                    self.fail();
                    return Err(());
                }
            },
            None => None,
        };
        let mut pending = self.pending.lock();
        pending.busy = false;
        if let Some(offset) = written {
            pending.queue.push_front((event, offset));
        }
        // Waking the writer for nothing would cost a context switch.
        if !pending.queue.is_empty() || pending.closed {
            self.ready.notify_one();
        }
        Ok(())
    }

    fn close(&self) {
        self.pending.lock().closed = true;
        self.ready.notify_all();
    }

    fn fail(&self) {
        let mut pending = self.pending.lock();
        pending.closed = true;
        pending.busy = false;
        pending.queue.clear();
        self.ready.notify_all();
    }

    /// Writer thread body: drains the queue with blocking writes until the
    /// sink is closed and empty.
    pub fn run_writer(&self) {
        let mut stream = &self.stream;
        loop {
            let (event, offset) = {
                let mut pending = self.pending.lock();
                loop {
                    if !pending.busy {
                        if let Some(next) = pending.queue.pop_front() {
                            pending.busy = true;
                            break next;
                        }
                        if pending.closed {
                            drop(pending);
                            let _ = self.stream.shutdown(Shutdown::Both);
                            return;
                        }
                    }
                    self.ready.wait(&mut pending);
                }
            };
            let ok = match event.frame(self.codec) {
                Some(frame) => stream.write_all(&frame[offset..]).is_ok(),
                None => true,
            };
            if !ok {
                self.fail();
                let _ = self.stream.shutdown(Shutdown::Both);
                return;
            }
            self.pending.lock().busy = false;
        }
    }
}

/// Writes as much of `buf` as the socket accepts without blocking.
#[cfg(unix)]
fn send_nowait(stream: &TcpStream, buf: &[u8]) -> io::Result<usize> {
    use std::os::fd::AsRawFd;
    let fd = stream.as_raw_fd();
    let mut sent = 0;
    while sent < buf.len() {
        let rest = &buf[sent..];
        // SAFETY: `rest` is a live slice and `fd` stays open for the call.
        let n = unsafe {
            libc::send(
                fd,
                rest.as_ptr().cast(),
                rest.len(),
                libc::MSG_DONTWAIT | libc::MSG_NOSIGNAL,
            )
        };
        if n >= 0 {
            sent += n as usize;
            continue;
        }
        let err = io::Error::last_os_error();
        match err.kind() {
            io::ErrorKind::WouldBlock => break,
            io::ErrorKind::Interrupted => continue,
            _ => return Err(err),
        }
    }
    Ok(sent)
}

#[cfg(not(unix))]
fn send_nowait(_stream: &TcpStream, _buf: &[u8]) -> io::Result<usize> {
    Ok(0)
}
