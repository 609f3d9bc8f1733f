//! Discrete-event engine: integer-nanosecond clock, a stable priority queue
//! of events, and named random streams.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Time since simulation start in nanoseconds. Also used for spans.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000_000)
    }

    /// Rounds to the nearest nanosecond; negative inputs clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if s <= 0.0 || s.is_nan() {
            SimTime(0)
        } else {
            SimTime((s * 1e9).round() as u64)
        }
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub const fn as_micros(self) -> u64 {
        self.0 / 1_000
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    pub fn saturating_add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }

    pub fn checked_sub(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_sub(rhs.0).map(SimTime)
    }

    pub fn mul_u64(self, k: u64) -> SimTime {
        SimTime(self.0.saturating_mul(k))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs_f64())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("cannot schedule event at {at} before current clock {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },
    #[error("invalid truncated gaussian: {0}")]
    InvalidDistribution(String),
}

/// Identifies a scheduled event so it can be cancelled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

struct Entry<E> {
    at: SimTime,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // BinaryHeap is a max-heap; invert so the earliest (then lowest seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.at.cmp(&self.at).then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunSummary {
    pub events_fired: u64,
    pub clock: SimTime,
    /// True when the queue ran dry before the horizon.
    pub exhausted: bool,
}

/// Event queue plus virtual clock. Events at equal times fire in insertion order.
pub struct Engine<E> {
    heap: BinaryHeap<Entry<E>>,
    cancelled: HashSet<u64>,
    now: SimTime,
    next_seq: u64,
    fired: u64,
}

impl<E> Default for Engine<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Engine<E> {
    pub fn new() -> Self {
        Engine {
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
            now: SimTime::ZERO,
            next_seq: 0,
            fired: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.heap.len() - self.cancelled.len()
    }

    pub fn schedule(&mut self, event: E, at: SimTime) -> Result<EventHandle, SimError> {
        if at < self.now {
            return Err(SimError::ScheduleInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry { at, seq, event });
        Ok(EventHandle(seq))
    }

    /// Schedules `delay` after the current clock; never fails.
    pub fn schedule_in(&mut self, event: E, delay: SimTime) -> EventHandle {
        let at = self.now.saturating_add(delay);
        self.schedule(event, at).expect("future time")
    }

    /// Returns false when the handle already fired or was cancelled before.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if handle.0 >= self.next_seq || !self.heap.iter().any(|e| e.seq == handle.0) {
            return false;
        }
        self.cancelled.insert(handle.0)
    }

    fn pop_live(&mut self, t_end: SimTime) -> Option<(SimTime, E)> {
        while let Some(top) = self.heap.peek() {
            if top.at > t_end {
                return None;
            }
            let entry = self.heap.pop().expect("peeked");
            if !self.cancelled.is_empty() && self.cancelled.remove(&entry.seq) {
                continue;
            }
            return Some((entry.at, entry.event));
        }
        None
    }

    /// Fires every event with time ≤ `t_end`, then leaves the clock at `t_end`.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> RunSummary
    where
        F: FnMut(&mut Engine<E>, E),
    {
        let start = self.fired;
        while let Some((at, event)) = self.pop_live(t_end) {
            debug_assert!(at >= self.now);
            self.now = at;
            self.fired += 1;
            handler(self, event);
        }
        let exhausted = self.heap.len() == self.cancelled.len();
        if t_end > self.now {
            self.now = t_end;
        }
        RunSummary {
            events_fired: self.fired - start,
            clock: self.now,
            exhausted,
        }
    }
}

/// Stochastic components that own an independent stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamKind {
    TrafficSize,
    TrafficJitter,
    RedCoin,
    L4sCoin,
    MacLoss,
    BbrCycle,
    Test,
}

impl StreamKind {
    fn label(self) -> &'static str {
        match self {
            StreamKind::TrafficSize => "traffic-size",
            StreamKind::TrafficJitter => "traffic-jitter",
            StreamKind::RedCoin => "red-coin",
            StreamKind::L4sCoin => "l4s-coin",
            StreamKind::MacLoss => "mac-loss",
            StreamKind::BbrCycle => "bbr-cycle",
            StreamKind::Test => "test",
        }
    }
}

/// A reproducible random sequence keyed by (seed, component, instance).
#[derive(Clone, Debug)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, kind: StreamKind, instance: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(kind.label().as_bytes());
        hasher.update(instance.to_le_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest[..32]);
        RandomStream {
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            self.uniform() < p
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn truncated_gaussian(&mut self, p: &TruncGaussParams) -> f64 {
        if p.std == 0.0 {
            return p.mean.clamp(p.min, p.max);
        }
        for _ in 0..TRUNC_GAUSS_MAX_TRIES {
            let x = p.mean + p.std * self.standard_normal();
            if x >= p.min && x <= p.max {
                return x;
            }
        }
        (p.mean + p.std * self.standard_normal()).clamp(p.min, p.max)
    }
}

const TRUNC_GAUSS_MAX_TRIES: usize = 64;

/// Gaussian restricted to `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncGaussParams {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl TruncGaussParams {
    pub fn new(mean: f64, std: f64, min: f64, max: f64) -> Result<Self, SimError> {
        let p = TruncGaussParams { mean, std, min, max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.std >= 0.0) {
            return Err(SimError::InvalidDistribution(format!("std {} < 0", self.std)));
        }
        if !(self.min <= self.max) {
            return Err(SimError::InvalidDistribution(format!(
                "min {} > max {}",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

pub fn draw_truncated_gaussian(
    stream: &mut RandomStream,
    p: &TruncGaussParams,
) -> Result<f64, SimError> {
    p.validate()?;
    Ok(stream.truncated_gaussian(p))
}
