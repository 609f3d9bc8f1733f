//! CoDel (RFC 8289) dequeue-side logic, with an ECN-marking variant that
//! CE-marks and delivers where the drop variant would discard.

use serde::{Deserialize, Serialize};

use crate::packet::{Ecn, Packet};
use crate::sim::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodelConfig {
    pub target: SimTime,
    pub interval: SimTime,
    /// Below this many queued bytes the queue is never considered standing.
    pub mtu_bytes: u64,
}

impl CodelConfig {
    pub fn new(target: SimTime, interval: SimTime) -> Self {
        CodelConfig {
            target,
            interval,
            mtu_bytes: 1500,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.target == SimTime::ZERO || self.interval == SimTime::ZERO {
            return Err("CoDel target and interval must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CodelState {
    pub first_above_time: Option<SimTime>,
    pub dropping: bool,
    pub drop_next: SimTime,
    pub drop_count: u64,
    pub last_count: u64,
}

/// `floor(interval / sqrt(count))` computed exactly in integers.
pub fn control_law_spacing(interval: SimTime, count: u64) -> SimTime {
    debug_assert!(count > 0);
    let i = interval.as_nanos() as u128;
    SimTime::from_nanos(isqrt(i * i / count as u128) as u64)
}

pub fn control_law(t: SimTime, interval: SimTime, count: u64) -> SimTime {
    t + control_law_spacing(interval, count)
}

fn isqrt(n: u128) -> u128 {
    if n < 2 {
        return n;
    }
    let mut x = (n as f64).sqrt() as u128;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

/// FIFO the CoDel logic pulls from.
pub trait CodelBuffer {
    fn pop(&mut self) -> Option<Packet>;
    /// Bytes still queued after the last pop.
    fn bytes(&self) -> u64;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CodelAction {
    Dropped,
    Marked,
}

impl CodelState {
    fn do_dequeue<B: CodelBuffer>(
        &mut self,
        buf: &mut B,
        now: SimTime,
        cfg: &CodelConfig,
    ) -> (Option<Packet>, bool) {
        let Some(p) = buf.pop() else {
            self.first_above_time = None;
            return (None, false);
        };
        let sojourn = now.saturating_sub(p.enqueued_at);
        let mut ok_to_drop = false;
        if sojourn < cfg.target || buf.bytes() <= cfg.mtu_bytes {
            self.first_above_time = None;
        } else {
            match self.first_above_time {
                None => self.first_above_time = Some(now + cfg.interval),
                Some(t) if now >= t => ok_to_drop = true,
                Some(_) => {}
            }
        }
        (Some(p), ok_to_drop)
    }

    /// Returns the packet to deliver (possibly CE-marked in mark mode) and
    /// reports every dropped or marked packet through `acted`.
    pub fn dequeue<B, F>(
        &mut self,
        buf: &mut B,
        now: SimTime,
        cfg: &CodelConfig,
        mark_mode: bool,
        mut acted: F,
    ) -> Option<Packet>
    where
        B: CodelBuffer,
        F: FnMut(&Packet, CodelAction),
    {
        let (mut pkt, mut ok_to_drop) = self.do_dequeue(buf, now, cfg);
        let Some(mut p) = pkt else {
            self.dropping = false;
            return None;
        };
        let can_mark = |p: &Packet| mark_mode && p.ecn != Ecn::NotEct;
        if self.dropping {
            if !ok_to_drop {
                self.dropping = false;
            }
            while self.dropping && now >= self.drop_next {
                if can_mark(&p) {
                    p.ecn = Ecn::Ce;
                    acted(&p, CodelAction::Marked);
                    self.drop_count += 1;
                    self.drop_next = control_law(self.drop_next, cfg.interval, self.drop_count);
                    return Some(p);
                }
                acted(&p, CodelAction::Dropped);
                self.drop_count += 1;
                (pkt, ok_to_drop) = self.do_dequeue(buf, now, cfg);
                match pkt {
                    Some(next) => p = next,
                    None => {
                        self.dropping = false;
                        return None;
                    }
                }
                if !ok_to_drop {
                    self.dropping = false;
                } else {
                    self.drop_next = control_law(self.drop_next, cfg.interval, self.drop_count);
                }
            }
            Some(p)
        } else if ok_to_drop {
            let mut out = None;
            if can_mark(&p) {
                p.ecn = Ecn::Ce;
                acted(&p, CodelAction::Marked);
                out = Some(p);
            } else {
                acted(&p, CodelAction::Dropped);
                (pkt, _) = self.do_dequeue(buf, now, cfg);
                if let Some(next) = pkt {
                    out = Some(next);
                }
            }
            self.dropping = true;
            let delta = self.drop_count.saturating_sub(self.last_count);
            self.drop_count = if delta > 1
                && now.saturating_sub(self.drop_next) < cfg.interval.mul_u64(16)
            {
                delta
            } else {
                1
            };
            self.drop_next = control_law(now, cfg.interval, self.drop_count);
            self.last_count = self.drop_count;
            out
        } else {
            Some(p)
        }
    }
}
