//! Thread-per-connection TCP plumbing shared by the broker and the relay.

use std::io;
use std::net::{Ipv4Addr, Ipv6Addr, Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::Arc;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::thread::JoinHandle;

use parking_lot::Mutex;

struct Connection {
    stream: TcpStream,
    threads: Vec<JoinHandle<()>>,
}

/// Collects the threads a connection handler starts so shutdown can join them.
pub(crate) struct Spawner {
    threads: Vec<JoinHandle<()>>,
    live: Arc<AtomicUsize>,
}

impl Spawner {
    pub fn spawn(&mut self, name: String, f: impl FnOnce() + Send + 'static) -> io::Result<()> {
        let live = self.live.clone();
        live.fetch_add(1, Ordering::SeqCst);
        let spawned = std::thread::Builder::new().name(name).spawn(move || {
            f();
            live.fetch_sub(1, Ordering::SeqCst);
        });
        match spawned {
            Ok(handle) => {
                self.threads.push(handle);
                Ok(())
            }
            Err(e) => {
                self.live.fetch_sub(1, Ordering::SeqCst);
                Err(e)
            }
        }
    }
}

/// Accept loop plus bookkeeping of every connection's threads.
pub(crate) struct Acceptor {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Mutex<Option<JoinHandle<()>>>,
    conns: Arc<Mutex<Vec<Connection>>>,
    live: Arc<AtomicUsize>,
}

impl Acceptor {
    /// Starts accepting on `listener`; `handler` receives each connection and
    /// starts its threads through the [`Spawner`].
    pub fn start<H>(listener: TcpListener, name: &str, handler: H) -> io::Result<Self>
    where
        H: Fn(TcpStream, &mut Spawner) -> io::Result<()> + Send + 'static,
    {
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let conns: Arc<Mutex<Vec<Connection>>> = Arc::default();
        let live = Arc::new(AtomicUsize::new(0));
        let thread = {
            let stop = stop.clone();
            let conns = conns.clone();
            let live = live.clone();
            std::thread::Builder::new()
                .name(format!("{name}-accept"))
                .spawn(move || {
                    for stream in listener.incoming() {
                        if stop.load(Ordering::SeqCst) {
                            break;
                        }
                        let stream = match stream {
                            Ok(s) => s,
                            Err(e) => {
                                log::warn!("accept failed: {e}");
                                continue;
                            }
                        };
                        let _ = stream.set_nodelay(true);
                        let Ok(control) = stream.try_clone() else {
                            continue;
                        };
                        let mut spawner = Spawner {
                            threads: Vec::new(),
                            live: live.clone(),
                        };
                        if let Err(e) = handler(stream, &mut spawner) {
                            log::warn!("connection setup failed: {e}");
                            let _ = control.shutdown(Shutdown::Both);
                        }
                        let mut conns = conns.lock();
                        conns.retain(|c| !c.threads.iter().all(JoinHandle::is_finished));
                        conns.push(Connection {
                            stream: control,
                            threads: spawner.threads,
                        });
                    }
                })?
        };
        Ok(Acceptor {
            addr,
            stop,
            thread: Mutex::new(Some(thread)),
            conns,
            live,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Connection threads still running.
    pub fn live_threads(&self) -> usize {
        self.live.load(Ordering::SeqCst)
    }

    /// Stops accepting, closes every connection and joins their threads.
    pub fn shutdown(&self) {
        let Some(thread) = self.thread.lock().take() else {
            return;
        };
        self.stop.store(true, Ordering::SeqCst);
        // Unblock accept().
        let _ = TcpStream::connect(wake_addr(self.addr));
        let _ = thread.join();
        let conns: Vec<Connection> = self.conns.lock().drain(..).collect();
        for conn in &conns {
            let _ = conn.stream.shutdown(Shutdown::Both);
        }
        for conn in conns {
            for t in conn.threads {
                let _ = t.join();
            }
        }
    }
}

fn wake_addr(addr: SocketAddr) -> SocketAddr {
    match addr {
        SocketAddr::V4(a) if a.ip().is_unspecified() => {
            SocketAddr::new(Ipv4Addr::LOCALHOST.into(), a.port())
        }
        SocketAddr::V6(a) if a.ip().is_unspecified() => {
            SocketAddr::new(Ipv6Addr::LOCALHOST.into(), a.port())
        }
        other => other,
    }
}
