//! Event-calendar kernel: a clock plus a binary heap of timestamped events,
//! popped in `(time, seq)` order. Cancellation is lazy: cancelled sequence
//! numbers are remembered and skipped on pop.

use alloc::collections::{BTreeSet, BinaryHeap};
use core::cmp::Ordering;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Arrival { contact_group: usize },
    ServiceCompletion { expert: usize },
    Abandonment { customer: usize },
    BackofficeCompletion { expert: usize },
    EpochBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
}

/// Heap entry ordered so that `BinaryHeap` (a max-heap) yields the smallest
/// `(time, seq)` first.
#[derive(Debug, Clone, Copy)]
struct Entry(Event);

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .time
            .total_cmp(&self.0.time)
            .then_with(|| other.0.seq.cmp(&self.0.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CausalityError {
    pub clock: f64,
    pub time: f64,
}

impl fmt::Display for CausalityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "event scheduled at {} before the clock ({})", self.time, self.clock)
    }
}

impl core::error::Error for CausalityError {}

#[derive(Debug, Clone, Default)]
pub struct EventCalendar {
    heap: BinaryHeap<Entry>,
    void: BTreeSet<u64>,
    clock: f64,
    next_seq: u64,
    popped: u64,
    cancelled: u64,
}

impl EventCalendar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Enqueues an event and returns its sequence number, which doubles as
    /// a cancellation handle.
    pub fn schedule(&mut self, time: f64, kind: EventKind) -> Result<u64, CausalityError> {
        if !(time >= self.clock) {
            return Err(CausalityError { clock: self.clock, time });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry(Event { time, seq, kind }));
        Ok(seq)
    }

    /// Removes the earliest live event and advances the clock to it.
    pub fn pop_next(&mut self) -> Option<Event> {
        while let Some(Entry(ev)) = self.heap.pop() {
            if self.void.remove(&ev.seq) {
                continue;
            }
            self.clock = ev.time;
            self.popped += 1;
            return Some(ev);
        }
        None
    }

    /// Time of the earliest live event without removing it.
    pub fn peek_time(&mut self) -> Option<f64> {
        while let Some(&Entry(ev)) = self.heap.peek() {
            if self.void.contains(&ev.seq) {
                self.heap.pop();
                self.void.remove(&ev.seq);
                continue;
            }
            return Some(ev.time);
        }
        None
    }

    /// Cancels every live event matching `predicate`; returns how many.
    pub fn cancel<F: FnMut(&Event) -> bool>(&mut self, mut predicate: F) -> usize {
        let hits: alloc::vec::Vec<u64> = self
            .heap
            .iter()
            .filter(|e| !self.void.contains(&e.0.seq) && predicate(&e.0))
            .map(|e| e.0.seq)
            .collect();
        for &seq in &hits {
            self.void.insert(seq);
        }
        self.cancelled += hits.len() as u64;
        hits.len()
    }

    /// Cancels the event with sequence number `seq`, if still pending.
    /// The caller must pass a handle returned by [`schedule`](Self::schedule)
    /// whose event has not been popped.
    pub fn cancel_seq(&mut self, seq: u64) -> bool {
        if seq >= self.next_seq || !self.void.insert(seq) {
            return false;
        }
        self.cancelled += 1;
        true
    }

    /// Live (non-cancelled) events still queued.
    pub fn len(&self) -> usize {
        self.heap.len() - self.void.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn scheduled_count(&self) -> u64 {
        self.next_seq
    }

    pub fn popped_count(&self) -> u64 {
        self.popped
    }

    pub fn cancelled_count(&self) -> u64 {
        self.cancelled
    }
}
