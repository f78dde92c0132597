use std::collections::VecDeque;
use std::sync::Arc;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};

/// Encoded wire bytes shared by every subscriber of one publish.
pub(crate) type Frame = Arc<Vec<u8>>;

#[derive(Debug, Default)]
pub(crate) struct TopicCounters {
    pub published: AtomicU64,
    pub delivered: AtomicU64,
    pub dropped: AtomicU64,
}

struct Lane {
    topic: Arc<str>,
    bound: usize,
    frames: VecDeque<Frame>,
    counters: Arc<TopicCounters>,
}

#[derive(Default)]
struct State {
    control: VecDeque<Frame>,
    lanes: Vec<Lane>,
    cursor: usize,
    closed: bool,
}

/// Outgoing queues of one session: a bounded drop-oldest lane per subscribed
/// topic plus an unbounded control lane for status replies.
///
/// Frames count as delivered when the session writer takes them.
#[derive(Default)]
pub(crate) struct Outbox {
    state: Mutex<State>,
    ready: Condvar,
}

impl Outbox {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Adds a lane for `topic`, or changes the bound of an existing one.
    pub fn attach(&self, topic: Arc<str>, bound: usize, counters: Arc<TopicCounters>) {
        let bound = bound.max(1);
        let mut state = self.state.lock();
        if let Some(lane) = state.lanes.iter_mut().find(|l| l.topic == topic) {
            lane.bound = bound;
            while lane.frames.len() > bound {
                lane.frames.pop_front();
                lane.counters.dropped.fetch_add(1, Ordering::Relaxed);
            }
            return;
        }
        state.lanes.push(Lane {
            topic,
            bound,
            frames: VecDeque::new(),
            counters,
        });
    }

    /// Removes the lane for `topic`, discarding anything still queued.
    pub fn detach(&self, topic: &str) {
        let mut state = self.state.lock();
        state.lanes.retain(|l| &*l.topic != topic);
    }

    /// Queues a frame on `topic`'s lane. Returns true if the oldest queued
    /// frame was evicted to make room.
    pub fn push(&self, topic: &str, frame: Frame) -> bool {
        let mut state = self.state.lock();
        if state.closed {
            return false;
        }
        let Some(lane) = state.lanes.iter_mut().find(|l| &*l.topic == topic) else {
            return false;
        };
        let mut dropped = false;
        if lane.frames.len() >= lane.bound {
            lane.frames.pop_front();
            lane.counters.dropped.fetch_add(1, Ordering::Relaxed);
            dropped = true;
        }
        lane.frames.push_back(frame);
        drop(state);
        self.ready.notify_one();
        dropped
    }

    pub fn push_control(&self, frame: Frame) {
        let mut state = self.state.lock();
        if state.closed {
            return;
        }
        state.control.push_back(frame);
        drop(state);
        self.ready.notify_one();
    }

    fn take(state: &mut State) -> Option<Frame> {
        if let Some(frame) = state.control.pop_front() {
            return Some(frame);
        }
        let n = state.lanes.len();
        for i in 0..n {
            let idx = (state.cursor + i) % n;
            let lane = &mut state.lanes[idx];
            if let Some(frame) = lane.frames.pop_front() {
                lane.counters.delivered.fetch_add(1, Ordering::Relaxed);
                state.cursor = (idx + 1) % n;
                return Some(frame);
            }
        }
        None
    }

    /// Blocks until a frame is available. `None` once closed.
    pub fn pop(&self) -> Option<Frame> {
        let mut state = self.state.lock();
        loop {
            if state.closed {
                return None;
            }
            if let Some(frame) = Self::take(&mut state) {
                return Some(frame);
            }
            self.ready.wait(&mut state);
        }
    }

    pub fn pop_timeout(&self, timeout: Duration) -> Option<Frame> {
        let deadline = Instant::now() + timeout;
        let mut state = self.state.lock();
        loop {
            if state.closed {
                return None;
            }
            if let Some(frame) = Self::take(&mut state) {
                return Some(frame);
            }
            if self.ready.wait_until(&mut state, deadline).timed_out() {
                return Self::take(&mut state);
            }
        }
    }

    pub fn close(&self) {
        let mut state = self.state.lock();
        state.closed = true;
        state.control.clear();
        state.lanes.clear();
        drop(state);
        self.ready.notify_all();
    }

    #[cfg(test)]
    fn queued(&self, topic: &str) -> usize {
        let state = self.state.lock();
        state
            .lanes
            .iter()
            .find(|l| &*l.topic == topic)
            .map_or(0, |l| l.frames.len())
    }
}
