//! Discrete-event engine: a virtual clock, a cancellable event queue ordered
//! by `(fire_at, seq)`, and seeded per-purpose random streams.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("event scheduled in the past: fire_at {fire_at} < clock {now}")]
    InThePast { fire_at: SimTime, now: SimTime },
    #[error("run_until({end}) is earlier than the clock ({now})")]
    EndInThePast { end: SimTime, now: SimTime },
}

/// Identifies one scheduled event; used for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn seq(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KernelStats {
    pub scheduled: u64,
    pub executed: u64,
    pub cancelled: u64,
}

/// Time-ordered queue of events of type `E`.
///
/// Payloads live in a map keyed by sequence number; cancelling removes the
/// payload and the heap entry is skipped lazily when it surfaces.
#[derive(Debug)]
pub struct Kernel<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Reverse<(SimTime, u64)>>,
    pending: HashMap<u64, E>,
    stats: KernelStats,
}

impl<E> Default for Kernel<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Kernel<E> {
    pub fn new() -> Self {
        Kernel {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            pending: HashMap::new(),
            stats: KernelStats::default(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn stats(&self) -> KernelStats {
        self.stats
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn schedule(&mut self, fire_at: SimTime, event: E) -> Result<EventHandle, KernelError> {
        if fire_at < self.now {
            return Err(KernelError::InThePast { fire_at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse((fire_at, seq)));
        self.pending.insert(seq, event);
        self.stats.scheduled += 1;
        Ok(EventHandle(seq))
    }

    /// Schedules `delay` after the current clock; cannot fail.
    pub fn schedule_in(&mut self, delay: SimTime, event: E) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, event).expect("now + delay is never in the past")
    }

    /// True iff the event existed and had not fired yet.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if self.pending.remove(&handle.0).is_some() {
            self.stats.cancelled += 1;
            true
        } else {
            false
        }
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.pending.contains_key(&handle.0)
    }

    /// Pops the next live event with `fire_at <= end` and advances the clock to it.
    pub fn pop_until(&mut self, end: SimTime) -> Option<(SimTime, E)> {
        while let Some(&Reverse((at, seq))) = self.heap.peek() {
            if at > end {
                return None;
            }
            self.heap.pop();
            if let Some(ev) = self.pending.remove(&seq) {
                debug_assert!(at >= self.now);
                self.now = at;
                self.stats.executed += 1;
                return Some((at, ev));
            }
        }
        None
    }

    /// Moves the clock forward to `end` once no earlier events remain.
    pub fn advance_to(&mut self, end: SimTime) -> Result<(), KernelError> {
        if end < self.now {
            return Err(KernelError::EndInThePast { end, now: self.now });
        }
        self.now = end;
        Ok(())
    }

    /// Executes every event with `fire_at <= end` in order, handing each to
    /// `handler` together with the kernel so it may schedule follow-ups.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F) -> Result<u64, KernelError>
    where
        F: FnMut(&mut Kernel<E>, SimTime, E),
    {
        if end < self.now {
            return Err(KernelError::EndInThePast { end, now: self.now });
        }
        let mut executed = 0;
        while let Some((at, ev)) = self.pop_until(end) {
            handler(self, at, ev);
            executed += 1;
        }
        self.now = end;
        Ok(executed)
    }
}

/// What a random stream is used for. Keeping purposes apart means a change in
/// how often one consumer draws never shifts another consumer's sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Mobility = 1,
    Traffic = 2,
    MacBackoff = 3,
    Jitter = 4,
    Routing = 5,
    Topology = 6,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    /// `None` for scenario-global streams.
    pub node: Option<u32>,
    pub purpose: Purpose,
}

impl StreamId {
    pub fn global(purpose: Purpose) -> Self {
        StreamId { node: None, purpose }
    }

    pub fn node(node: u32, purpose: Purpose) -> Self {
        StreamId { node: Some(node), purpose }
    }

    fn key(self) -> u64 {
        let node = self.node.map_or(0xFFFF_FFFF_u64, u64::from);
        (node << 8) | self.purpose as u64
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic pseudo-random stream for one `(seed, stream id)` pair.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, id: StreamId) -> Self {
        let mixed = splitmix64(splitmix64(seed) ^ splitmix64(id.key()));
        RandomStream { rng: ChaCha8Rng::seed_from_u64(mixed) }
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}
