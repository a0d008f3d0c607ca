use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};

#[derive(Debug)]
struct Inner<T> {
    items: VecDeque<T>,
    closed: bool,
    overwritten: u64,
}

/// Bounded single-producer/single-consumer queue. A push into a full
/// queue discards the oldest item instead of blocking.
#[derive(Debug)]
pub struct OverwriteQueue<T> {
    capacity: usize,
    inner: Mutex<Inner<T>>,
    ready: Condvar,
}

pub const STAGE_QUEUE_DEPTH: usize = 2;

impl<T> OverwriteQueue<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        Self {
            capacity,
            inner: Mutex::new(Inner {
                items: VecDeque::with_capacity(capacity),
                closed: false,
                overwritten: 0,
            }),
            ready: Condvar::new(),
        }
    }

    /// Returns the item that was pushed out, if any.
    pub fn push(&self, item: T) -> Option<T> {
        let mut g = self.inner.lock().expect("queue lock");
        let evicted = if g.items.len() == self.capacity {
            g.overwritten += 1;
            g.items.pop_front()
        } else {
            None
        };
        g.items.push_back(item);
        self.ready.notify_one();
        evicted
    }

    /// Blocks until an item arrives; `None` once closed and drained.
    pub fn pop(&self) -> Option<T> {
        let mut g = self.inner.lock().expect("queue lock");
        loop {
            if let Some(x) = g.items.pop_front() {
                return Some(x);
            }
            if g.closed {
                return None;
            }
            g = self.ready.wait(g).expect("queue lock");
        }
    }

    pub fn close(&self) {
        self.inner.lock().expect("queue lock").closed = true;
        self.ready.notify_all();
    }

    pub fn overwritten(&self) -> u64 {
        self.inner.lock().expect("queue lock").overwritten
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("queue lock").items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
