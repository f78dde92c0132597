use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::{Receiver, Sender};
use parking_lot::{Mutex, RwLock};

use crate::codec::{
    Codec, Document, JSON_PREFIX_LEN, RawDocument, decode_payload, encode_frame, encode_frame_capped,
};

use super::envelope::{Envelope, Op, Status, header_from_raw};
use super::outbox::{Frame, Outbox, TopicCounters};
use super::{BrokerConfig, BrokerError, SessionId};

/// Capacity of the hand-off from session readers to a topic worker. A full
/// channel pushes back on that topic's publishers only.
const WORKER_CHANNEL_CAPACITY: usize = 64;

/// Point-in-time view of one topic.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct TopicSummary {
    pub name: String,
    pub type_name: Option<String>,
    pub publishers: usize,
    pub subscribers: usize,
    pub published_count: u64,
    pub delivered_count: u64,
    pub dropped_count: u64,
}

#[derive(Default)]
struct Members {
    type_name: Option<String>,
    publishers: BTreeSet<SessionId>,
    subscribers: Vec<(SessionId, Arc<Outbox>)>,
    retired: bool,
}

struct Topic {
    name: Arc<str>,
    counters: Arc<TopicCounters>,
    members: Mutex<Members>,
    worker_tx: Mutex<Option<Sender<Frame>>>,
}

impl Topic {
    /// Hands one encoded publish frame to every subscriber lane.
    fn fan_out(&self, frame: Frame) {
        let members = self.members.lock();
        for (_, outbox) in &members.subscribers {
            outbox.push(&self.name, frame.clone());
        }
    }

    fn check_type(&self, members: &Members, requested: Option<&str>) -> Result<(), BrokerError> {
        match (members.type_name.as_deref(), requested) {
            (Some(existing), Some(requested)) if existing != requested => {
                Err(BrokerError::TypeConflict {
                    topic: self.name.to_string(),
                    existing: existing.to_owned(),
                    requested: requested.to_owned(),
                })
            }
            _ => Ok(()),
        }
    }
}

struct SessionEntry {
    outbox: Arc<Outbox>,
    topics: HashSet<String>,
}

/// Topic registry and routing. Transport-independent: the TCP server and
/// [`LocalSession`]s drive it the same way.
pub struct Broker {
    codec: Codec,
    max_frame: usize,
    default_queue_length: usize,
    topic_workers: bool,
    topics: RwLock<HashMap<String, Arc<Topic>>>,
    // Counters outlive a retired topic so they stay monotone per name.
    counters: Mutex<HashMap<String, Arc<TopicCounters>>>,
    sessions: Mutex<HashMap<SessionId, SessionEntry>>,
    next_session: AtomicU64,
    workers: Mutex<Vec<JoinHandle<()>>>,
    live_workers: Arc<AtomicUsize>,
}

impl Broker {
    pub fn new(config: &BrokerConfig) -> Result<Arc<Self>, BrokerError> {
        config.validate()?;
        Ok(Arc::new(Broker {
            codec: config.codec,
            max_frame: config.max_frame,
            default_queue_length: config.default_queue_length,
            topic_workers: config.topic_workers,
            topics: RwLock::default(),
            counters: Mutex::default(),
            sessions: Mutex::default(),
            next_session: AtomicU64::new(1),
            workers: Mutex::default(),
            live_workers: Arc::new(AtomicUsize::new(0)),
        }))
    }

    pub fn codec(&self) -> Codec {
        self.codec
    }

    pub(crate) fn max_frame(&self) -> usize {
        self.max_frame
    }

    pub(crate) fn open_session(&self) -> (SessionId, Arc<Outbox>) {
        let id = SessionId(self.next_session.fetch_add(1, Ordering::Relaxed));
        let outbox = Outbox::new();
        self.sessions.lock().insert(
            id,
            SessionEntry {
                outbox: outbox.clone(),
                topics: HashSet::new(),
            },
        );
        (id, outbox)
    }

    /// Opens an in-process session, useful for embedding and tests.
    pub fn connect_local(self: &Arc<Self>) -> LocalSession {
        let (id, outbox) = self.open_session();
        LocalSession {
            broker: self.clone(),
            id,
            outbox,
        }
    }

    /// Removes a session from every topic it touched and closes its outbox.
    pub fn close_session(&self, session: SessionId) {
        let Some(entry) = self.sessions.lock().remove(&session) else {
            return;
        };
        entry.outbox.close();
        for name in entry.topics {
            if let Some(topic) = self.lookup(&name) {
                {
                    let mut members = topic.members.lock();
                    members.publishers.remove(&session);
                    members.subscribers.retain(|(id, _)| *id != session);
                }
                self.maybe_retire(&topic);
            }
        }
    }

    /// Queues an error status for the session.
    pub(crate) fn report(&self, session: SessionId, error: &BrokerError) {
        let outbox = match self.sessions.lock().get(&session) {
            Some(entry) => entry.outbox.clone(),
            None => return,
        };
        let status = Status::error(error.code(), error.to_string());
        match encode_frame(&status.to_document(), self.codec) {
            Ok(bytes) => outbox.push_control(Arc::new(bytes)),
            Err(e) => log::error!("cannot encode status: {e}"),
        }
    }

    pub fn process_envelope(&self, session: SessionId, env: Envelope) -> Result<(), BrokerError> {
        env.validate()?;
        match env.op {
            Op::Advertise => self.advertise(session, &env.topic, env.type_name.as_deref()),
            Op::Subscribe => {
                let bound = env
                    .queue_length
                    .map_or(self.default_queue_length, |q| q as usize);
                self.subscribe(session, &env.topic, env.type_name.as_deref(), bound)
            }
            Op::Publish => {
                let type_name = env.type_name.clone();
                let topic = env.topic.clone();
                let frame = encode_frame_capped(&env.into_document(), self.codec, self.max_frame)?;
                self.publish(&topic, type_name.as_deref(), Arc::new(frame))
            }
            Op::Unadvertise => {
                self.remove_member(&env.topic, |m| {
                    m.publishers.remove(&session);
                });
                Ok(())
            }
            Op::Unsubscribe => {
                self.remove_member(&env.topic, |m| {
                    m.subscribers.retain(|(id, _)| *id != session);
                });
                if let Some(entry) = self.sessions.lock().get(&session) {
                    entry.outbox.detach(&env.topic);
                }
                Ok(())
            }
        }
    }

    /// Handles one received payload. Publish frames are validated and then
    /// forwarded byte for byte; nothing is re-encoded on the hot path.
    pub(crate) fn process_frame(&self, session: SessionId, payload: &[u8]) -> Result<(), BrokerError> {
        match self.codec {
            Codec::Binary => {
                let raw = RawDocument::from_bytes(payload)?;
                if raw.get_str("op")? == Some(Op::Publish.as_str()) {
                    let env = header_from_raw(&raw)?;
                    env.validate()?;
                    return self.publish(&env.topic, env.type_name.as_deref(), Arc::new(payload.to_vec()));
                }
                self.process_envelope(session, Envelope::from_document(raw.to_document()?)?)
            }
            Codec::Json => {
                let env = Envelope::from_document(decode_payload(payload, Codec::Json, &Default::default())?)?;
                if env.op != Op::Publish {
                    return self.process_envelope(session, env);
                }
                env.validate()?;
                let mut frame = Vec::with_capacity(JSON_PREFIX_LEN + payload.len());
                frame.extend_from_slice(&(payload.len() as u32).to_le_bytes());
                frame.extend_from_slice(payload);
                self.publish(&env.topic, env.type_name.as_deref(), Arc::new(frame))
            }
        }
    }

    fn advertise(&self, session: SessionId, name: &str, type_name: Option<&str>) -> Result<(), BrokerError> {
        loop {
            let topic = self.get_or_create(name);
            let mut members = topic.members.lock();
            if members.retired {
                continue;
            }
            topic.check_type(&members, type_name)?;
            if members.type_name.is_none() {
                members.type_name = type_name.map(str::to_owned);
            }
            members.publishers.insert(session);
            drop(members);
            self.track(session, name);
            return Ok(());
        }
    }

    fn subscribe(
        &self,
        session: SessionId,
        name: &str,
        type_name: Option<&str>,
        bound: usize,
    ) -> Result<(), BrokerError> {
        let Some(outbox) = self.sessions.lock().get(&session).map(|e| e.outbox.clone()) else {
            return Ok(());
        };
        loop {
            let topic = self.get_or_create(name);
            let mut members = topic.members.lock();
            if members.retired {
                continue;
            }
            topic.check_type(&members, type_name)?;
            outbox.attach(topic.name.clone(), bound, topic.counters.clone());
            if !members.subscribers.iter().any(|(id, _)| *id == session) {
                members.subscribers.push((session, outbox.clone()));
            }
            drop(members);
            self.track(session, name);
            return Ok(());
        }
    }

    fn publish(&self, name: &str, type_name: Option<&str>, frame: Frame) -> Result<(), BrokerError> {
        let Some(topic) = self.lookup(name) else {
            return Ok(());
        };
        topic.check_type(&topic.members.lock(), type_name)?;
        topic.counters.published.fetch_add(1, Ordering::Relaxed);
        let tx = topic.worker_tx.lock().clone();
        match tx {
            Some(tx) => {
                // A closed channel means the topic retired meanwhile; the
                // message had no subscribers left to reach.
                let _ = tx.send(frame);
            }
            None => topic.fan_out(frame),
        }
        Ok(())
    }

    fn remove_member(&self, name: &str, remove: impl FnOnce(&mut Members)) {
        if let Some(topic) = self.lookup(name) {
            remove(&mut topic.members.lock());
            self.maybe_retire(&topic);
        }
    }

    fn track(&self, session: SessionId, name: &str) {
        if let Some(entry) = self.sessions.lock().get_mut(&session) {
            entry.topics.insert(name.to_owned());
        }
    }

    fn lookup(&self, name: &str) -> Option<Arc<Topic>> {
        self.topics.read().get(name).cloned()
    }

    fn get_or_create(&self, name: &str) -> Arc<Topic> {
        if let Some(topic) = self.lookup(name) {
            return topic;
        }
        let mut topics = self.topics.write();
        if let Some(topic) = topics.get(name) {
            return topic.clone();
        }
        let counters = self
            .counters
            .lock()
            .entry(name.to_owned())
            .or_default()
            .clone();
        let topic = Arc::new(Topic {
            name: Arc::from(name),
            counters,
            members: Mutex::default(),
            worker_tx: Mutex::new(None),
        });
        if self.topic_workers {
            let (tx, rx) = crossbeam_channel::bounded(WORKER_CHANNEL_CAPACITY);
            *topic.worker_tx.lock() = Some(tx);
            self.spawn_worker(topic.clone(), rx);
        }
        topics.insert(name.to_owned(), topic.clone());
        topic
    }

    fn spawn_worker(&self, topic: Arc<Topic>, rx: Receiver<Frame>) {
        let live = self.live_workers.clone();
        live.fetch_add(1, Ordering::SeqCst);
        let handle = std::thread::Builder::new()
            .name(format!("topic{}", topic.name))
            .spawn(move || {
                for frame in rx {
                    topic.fan_out(frame);
                }
                live.fetch_sub(1, Ordering::SeqCst);
            })
            .expect("spawn topic worker");
        let mut workers = self.workers.lock();
        workers.retain(|h| !h.is_finished());
        workers.push(handle);
    }

    fn maybe_retire(&self, topic: &Arc<Topic>) {
        let mut topics = self.topics.write();
        let mut members = topic.members.lock();
        if members.retired || !members.publishers.is_empty() || !members.subscribers.is_empty() {
            return;
        }
        members.retired = true;
        if topics.get(&*topic.name).is_some_and(|t| Arc::ptr_eq(t, topic)) {
            topics.remove(&*topic.name);
        }
        topic.worker_tx.lock().take();
    }

    /// Snapshot of all live topics, ordered by name.
    pub fn topic_stats(&self) -> Vec<TopicSummary> {
        let topics: Vec<Arc<Topic>> = self.topics.read().values().cloned().collect();
        let mut out: Vec<TopicSummary> = topics
            .iter()
            .map(|t| {
                let members = t.members.lock();
                TopicSummary {
                    name: t.name.to_string(),
                    type_name: members.type_name.clone(),
                    publishers: members.publishers.len(),
                    subscribers: members.subscribers.len(),
                    published_count: t.counters.published.load(Ordering::Relaxed),
                    delivered_count: t.counters.delivered.load(Ordering::Relaxed),
                    dropped_count: t.counters.dropped.load(Ordering::Relaxed),
                }
            })
            .collect();
        out.sort_by(|a, b| a.name.cmp(&b.name));
        out
    }

    /// Topic workers currently running.
    pub fn live_workers(&self) -> usize {
        self.live_workers.load(Ordering::SeqCst)
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().len()
    }

    /// Closes every session, retires every topic and joins the workers.
    pub fn shutdown(&self) {
        let ids: Vec<SessionId> = self.sessions.lock().keys().copied().collect();
        for id in ids {
            self.close_session(id);
        }
        let topics: Vec<Arc<Topic>> = self.topics.write().drain().map(|(_, t)| t).collect();
        for topic in topics {
            topic.members.lock().retired = true;
            topic.worker_tx.lock().take();
        }
        let workers: Vec<JoinHandle<()>> = self.workers.lock().drain(..).collect();
        for handle in workers {
            let _ = handle.join();
        }
    }
}

impl Drop for Broker {
    fn drop(&mut self) {
        // Workers hold their topic, not the broker; closing the channels
        // lets them exit.
        for topic in self.topics.get_mut().values() {
            topic.worker_tx.lock().take();
        }
    }
}

/// A session attached directly to a [`Broker`] without a socket.
pub struct LocalSession {
    broker: Arc<Broker>,
    id: SessionId,
    outbox: Arc<Outbox>,
}

impl LocalSession {
    pub fn id(&self) -> SessionId {
        self.id
    }

    /// Processes `env`; errors are returned and also queued as a status
    /// frame, exactly as a remote session would see them.
    pub fn send(&self, env: Envelope) -> Result<(), BrokerError> {
        let result = self.broker.process_envelope(self.id, env);
        if let Err(e) = &result {
            self.broker.report(self.id, e);
        }
        result
    }

    /// Next outgoing document, waiting up to `timeout`.
    pub fn recv_timeout(&self, timeout: Duration) -> Option<Document> {
        let frame = self.outbox.pop_timeout(timeout)?;
        decode_frame(&frame, self.broker.codec).ok()
    }

    pub fn try_recv(&self) -> Option<Document> {
        self.recv_timeout(Duration::ZERO)
    }
}

impl Drop for LocalSession {
    fn drop(&mut self) {
        self.broker.close_session(self.id);
    }
}

fn decode_frame(frame: &[u8], codec: Codec) -> Result<Document, BrokerError> {
    let payload = match codec {
        Codec::Binary => frame,
        Codec::Json => &frame[crate::codec::JSON_PREFIX_LEN..],
    };
    Ok(decode_payload(payload, codec, &Default::default())?)
}
