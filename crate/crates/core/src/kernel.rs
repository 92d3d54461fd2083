//! Discrete-event core: integer-millisecond clock, a total-ordered event
//! queue, and named random streams.
//!
//! Two runs with the same seed and the same schedule of calls produce
//! bit-identical traces. Ties at the same firing time are broken by
//! insertion order, never by payload contents, so the queue imposes a
//! total order on events without constraining what they carry.

use std::cmp::Ordering;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

/// Absolute simulation time in integer milliseconds since run start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_ms(ms: u64) -> Self {
        SimTime(ms)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000)
    }

    pub const fn from_mins(m: u64) -> Self {
        SimTime(m * 60_000)
    }

    pub const fn from_hours(h: u64) -> Self {
        SimTime(h * 3_600_000)
    }

    pub const fn as_ms(self) -> u64 {
        self.0
    }

    pub const fn add_ms(self, ms: u64) -> Self {
        SimTime(self.0 + ms)
    }

    /// Milliseconds elapsed since `earlier`; zero if `earlier` is later.
    pub const fn since(self, earlier: SimTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("cannot schedule event at {at} before current time {now}")]
    SchedulingInPast { at: SimTime, now: SimTime },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A scheduled event: firing time, global insertion sequence number, payload.
#[derive(Debug, Clone)]
pub struct EventRecord<E> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub kind: E,
}

struct HeapEntry<E> {
    fire_at: SimTime,
    seq: u64,
    kind: E,
}

// Order by (fire_at, seq) only; payloads never participate in ordering.
// Reversed so the BinaryHeap (a max-heap) pops the earliest entry first.
impl<E> PartialEq for HeapEntry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}
impl<E> Eq for HeapEntry<E> {}
impl<E> PartialOrd for HeapEntry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for HeapEntry<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.fire_at, other.seq).cmp(&(self.fire_at, self.seq))
    }
}

/// Deterministic event queue. `seq` increments on every insertion, so events
/// scheduled for the same millisecond fire in the order they were scheduled.
pub struct EventQueue<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<HeapEntry<E>>,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue { now: SimTime::ZERO, next_seq: 0, heap: BinaryHeap::new() }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Schedule `kind` to fire at `at`. Returns the assigned sequence number.
    pub fn schedule(&mut self, at: SimTime, kind: E) -> Result<u64, KernelError> {
        if at < self.now {
            return Err(KernelError::SchedulingInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(HeapEntry { fire_at: at, seq, kind });
        Ok(seq)
    }

    pub fn schedule_in(&mut self, delay_ms: u64, kind: E) -> Result<u64, KernelError> {
        self.schedule(self.now.add_ms(delay_ms), kind)
    }

    /// Pop the next event due at or before `horizon`, advancing the clock to
    /// its firing time. Returns `None` once nothing more is due.
    pub fn pop_due(&mut self, horizon: SimTime) -> Option<EventRecord<E>> {
        match self.heap.peek() {
            Some(e) if e.fire_at <= horizon => {
                let e = self.heap.pop().unwrap();
                debug_assert!(e.fire_at >= self.now);
                self.now = e.fire_at;
                Some(EventRecord { fire_at: e.fire_at, seq: e.seq, kind: e.kind })
            }
            _ => None,
        }
    }

    /// Advance the clock to `at` without processing anything (used after the
    /// due events are drained so the clock lands exactly on the horizon).
    pub fn advance_to(&mut self, at: SimTime) {
        if at > self.now {
            self.now = at;
        }
    }

    /// Drain events due up to and including `horizon`, handing each to
    /// `handle` together with the queue so handlers can schedule follow-ups.
    /// Leaves the clock at `horizon` and returns the number processed.
    pub fn run_until<F>(&mut self, horizon: SimTime, mut handle: F) -> u64
    where
        F: FnMut(&mut Self, EventRecord<E>),
    {
        let mut processed = 0;
        while let Some(ev) = self.pop_due(horizon) {
            processed += 1;
            handle(self, ev);
        }
        self.advance_to(horizon);
        processed
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// One named random stream. Streams are seeded from (run seed, name) only,
/// so the draw sequence of one stream is unaffected by how often any other
/// stream is used — toggling a feature that consumes randomness elsewhere
/// never perturbs this stream's sequence.
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    fn new(seed: u64, name: &str) -> Self {
        let h = fnv1a(name.as_bytes());
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&h.to_le_bytes());
        key[16..24].copy_from_slice(&(seed ^ 0x9e37_79b9_7f4a_7c15).to_le_bytes());
        key[24..32].copy_from_slice(&(h ^ 0x6a09_e667_f3bc_c908).to_le_bytes());
        RandomStream { rng: ChaCha8Rng::from_seed(key) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [lo, hi] inclusive.
    pub fn uniform_int(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        let span = hi - lo + 1;
        lo + self.next_u64() % span
    }

    /// Exponential draw with the given mean, via the inverse CDF so the
    /// mapping from raw bits to value is pinned to this code, not a library.
    pub fn draw_exponential(&mut self, mean: f64) -> Result<f64, KernelError> {
        if !(mean > 0.0) {
            return Err(KernelError::InvalidParameter(format!(
                "exponential mean must be > 0, got {mean}"
            )));
        }
        let u = self.uniform(); // in [0,1), so 1-u is in (0,1] and ln is finite
        Ok(-mean * (1.0 - u).ln())
    }

    /// Standard normal via Box-Muller (two uniforms per draw).
    pub fn draw_normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.uniform();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Registry of named streams for one run. Streams are created on first use;
/// creation order does not matter because each is seeded independently.
pub struct RandomStreams {
    seed: u64,
    streams: HashMap<String, RandomStream>,
}

impl RandomStreams {
    pub fn new(seed: u64) -> Self {
        RandomStreams { seed, streams: HashMap::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&mut self, name: &str) -> &mut RandomStream {
        match self.streams.entry(name.to_owned()) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => {
                let s = RandomStream::new(self.seed, e.key());
                e.insert(s)
            }
        }
    }
}
