//! Reference implementations written straight from the published formulas,
//! kept separate from the library so the two can be compared.
#![allow(dead_code)]

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rlcsim::packet::{FlowId, Packet};
use rlcsim::queue::{ActionMode, AqmConfig, CodelConfig, FlowQueue, QueueEventKind};
use rlcsim::sim::SimTime;

// RED

pub fn red_p_b(avg: f64, min_th: f64, max_th: f64, p_max: f64) -> f64 {
    p_max * (avg - min_th) / (max_th - min_th)
}

/// Act probability: zero below `min_th`, one at or above `max_th`, otherwise
/// the count-corrected `p_b / (1 - count * p_b)` saturating at one.
pub fn red_p_a(avg: f64, count: u64, min_th: f64, max_th: f64, p_max: f64) -> f64 {
    if avg < min_th {
        0.0
    } else if avg >= max_th {
        1.0
    } else {
        let p_b = red_p_b(avg, min_th, max_th, p_max);
        let d = 1.0 - count as f64 * p_b;
        if d <= 0.0 {
            1.0
        } else {
            (p_b / d).min(1.0)
        }
    }
}

pub fn ewma_closed_form(avg0: f64, len: f64, w_q: f64, n: u32) -> f64 {
    let k = (1.0 - w_q).powi(n as i32);
    k * avg0 + len * (1.0 - k)
}

// L4S

pub fn l4s_ramp(qdelay_ns: u64, low_ns: u64, high_ns: u64) -> f64 {
    if qdelay_ns <= low_ns {
        0.0
    } else if qdelay_ns >= high_ns {
        1.0
    } else {
        (qdelay_ns - low_ns) as f64 / (high_ns - low_ns) as f64
    }
}

// CUBIC, in segments.

pub fn cubic_symbolic(t: f64, w_max_bytes: f64, mss: f64) -> f64 {
    let c = 0.4;
    let beta = 0.7;
    let w_max = w_max_bytes / mss;
    let k = (w_max * (1.0 - beta) / c).cbrt();
    let w = c * (t - k).powi(3) + w_max;
    (w * mss).max(mss)
}

pub fn cubic_k_symbolic(w_max_bytes: f64, mss: f64) -> f64 {
    (w_max_bytes / mss * 0.3 / 0.4).cbrt()
}

// CoDel, transcribed from the RFC 8289 pseudocode with integer nanoseconds
// and the RFC's zero sentinel for `first_above_time`.

pub struct CodelOracle {
    target: u64,
    interval: u64,
    maxpacket: u64,
    q: VecDeque<(u64, u64, u32)>,
    bytes: u64,
    first_above_time: u64,
    drop_next: u64,
    count: u64,
    lastcount: u64,
    dropping: bool,
    pub drops: Vec<(u64, u64)>,
}

impl CodelOracle {
    pub fn new(target: u64, interval: u64, maxpacket: u64) -> Self {
        CodelOracle {
            target,
            interval,
            maxpacket,
            q: VecDeque::new(),
            bytes: 0,
            first_above_time: 0,
            drop_next: 0,
            count: 0,
            lastcount: 0,
            dropping: false,
            drops: Vec::new(),
        }
    }

    pub fn enqueue(&mut self, seq: u64, size: u32, now: u64) {
        self.q.push_back((seq, now, size));
        self.bytes += size as u64;
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Largest s with s*s*count <= interval*interval.
    fn spacing(&self, count: u64) -> u64 {
        let target = self.interval as u128 * self.interval as u128;
        let (mut lo, mut hi) = (0u128, self.interval as u128 + 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if mid * mid * count as u128 <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo as u64
    }

    fn control_law(&self, t: u64) -> u64 {
        t + self.spacing(self.count)
    }

    fn dodequeue(&mut self, now: u64) -> (Option<(u64, u64, u32)>, bool) {
        let Some(p) = self.q.pop_front() else {
            self.first_above_time = 0;
            return (None, false);
        };
        self.bytes -= p.2 as u64;
        let sojourn = now - p.1;
        let mut ok_to_drop = false;
        if sojourn < self.target || self.bytes <= self.maxpacket {
            self.first_above_time = 0;
        } else if self.first_above_time == 0 {
            self.first_above_time = now + self.interval;
        } else if now >= self.first_above_time {
            ok_to_drop = true;
        }
        (Some(p), ok_to_drop)
    }

    pub fn dequeue(&mut self, now: u64) -> Option<(u64, u64, u32)> {
        let (mut p, mut ok) = self.dodequeue(now);
        if p.is_none() {
            self.dropping = false;
            return None;
        }
        if self.dropping {
            if !ok {
                self.dropping = false;
            }
            while now >= self.drop_next && self.dropping {
                self.drops.push((now, p.unwrap().0));
                self.count += 1;
                (p, ok) = self.dodequeue(now);
                if !ok {
                    self.dropping = false;
                } else {
                    self.drop_next = self.control_law(self.drop_next);
                }
            }
        } else if ok {
            self.drops.push((now, p.unwrap().0));
            (p, _) = self.dodequeue(now);
            self.dropping = true;
            let delta = self.count.wrapping_sub(self.lastcount);
            self.count = 1;
            if delta > 1 && (now as i128 - self.drop_next as i128) < 16 * self.interval as i128 {
                self.count = delta;
            }
            self.drop_next = self.control_law(now);
            self.lastcount = self.count;
        }
        p
    }
}

/// Open-loop arrivals: (time ns, size bytes), overloaded in bursts so the
/// controller repeatedly enters and leaves its dropping state.
pub fn overload_trace(seed: u64, n: usize, link_bps: u64) -> Vec<(u64, u32)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0u64;
    let mut out = Vec::with_capacity(n);
    let mut load = 1.5;
    for i in 0..n {
        if i % 500 == 0 {
            load = rng.random_range(0.6..2.5);
        }
        let size: u32 = rng.random_range(64..=1500);
        let service_ns = size as u64 * 8 * 1_000_000_000 / link_bps;
        let mean_gap = service_ns as f64 / load;
        let gap = -mean_gap * (1.0 - rng.random::<f64>()).ln();
        t += gap as u64;
        out.push((t, size));
    }
    out
}

/// Feeds `trace` through a fixed-rate link. `deq` returns the size of the
/// delivered packet, or None when nothing was left to send.
pub fn drive(
    trace: &[(u64, u32)],
    link_bps: u64,
    mut enq: impl FnMut(u64, u32, u64),
    mut is_empty: impl FnMut() -> bool,
    mut deq: impl FnMut(u64) -> Option<u32>,
) {
    let mut i = 0;
    let mut t_link = 0u64;
    loop {
        if is_empty() {
            if i >= trace.len() {
                break;
            }
            t_link = t_link.max(trace[i].0);
        }
        while i < trace.len() && trace[i].0 <= t_link {
            enq(i as u64, trace[i].1, trace[i].0);
            i += 1;
        }
        match deq(t_link) {
            Some(size) => t_link += size as u64 * 8 * 1_000_000_000 / link_bps,
            None if i >= trace.len() => break,
            None => {}
        }
    }
}

/// (time ns, seq) of every CoDel drop made by the library queue on `trace`.
pub fn library_codel_drops(trace: &[(u64, u32)], link_bps: u64, cfg: CodelConfig) -> Vec<(u64, u64)> {
    let q = FlowQueue::new(FlowId(0), u64::MAX / 2, AqmConfig::Codel(cfg), ActionMode::Drop, 0)
        .unwrap()
        .with_event_log();
    let q = std::cell::RefCell::new(q);
    let mut scratch = Vec::new();
    drive(
        trace,
        link_bps,
        |seq, size, t| {
            q.borrow_mut().enqueue(Packet::new(FlowId(0), seq, size, SimTime::from_nanos(t)), SimTime::from_nanos(t));
        },
        || q.borrow().is_empty(),
        |t| q.borrow_mut().dequeue(SimTime::from_nanos(t), &mut scratch).map(|p| p.size),
    );
    let events = q.borrow().events().unwrap().to_vec();
    events
        .iter()
        .filter(|e| e.kind == QueueEventKind::DropAqm)
        .map(|e| (e.t.as_nanos(), e.seq))
        .collect()
}

pub fn oracle_codel_drops(trace: &[(u64, u32)], link_bps: u64, target: u64, interval: u64, mtu: u64) -> Vec<(u64, u64)> {
    let o = std::cell::RefCell::new(CodelOracle::new(target, interval, mtu));
    drive(
        trace,
        link_bps,
        |seq, size, t| o.borrow_mut().enqueue(seq, size, t),
        || o.borrow().is_empty(),
        |t| o.borrow_mut().dequeue(t).map(|p| p.2),
    );
    o.into_inner().drops
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

// Structural checks on whole runs.

use rlcsim::transport::TransportEventKind;
use rlcsim::world::WorldOutput;

fn first_queue(out: &WorldOutput, kind: QueueEventKind) -> Option<SimTime> {
    out.flows[0].queue_events.iter().find(|e| e.kind == kind).map(|e| e.t)
}

/// Saturation, overflow drops, an RTO, the window collapsing, then a quiet
/// period of at least 500 ms without overflow drops.
pub fn droptail_collapse_order(out: &WorldOutput, capacity: u64, mss: u64) -> Result<String, String> {
    let f = &out.flows[0];
    let sat = f
        .queue_events
        .iter()
        .find(|e| e.occupancy + mss > capacity)
        .map(|e| e.t)
        .ok_or("queue never saturated")?;
    let ovf = first_queue(out, QueueEventKind::DropOverflow).ok_or("no overflow drops")?;
    if ovf < sat {
        return Err(format!("overflow at {ovf:?} before saturation at {sat:?}"));
    }
    let rto = f
        .transport_events
        .iter()
        .find(|e| e.kind == TransportEventKind::Rto && e.t >= ovf)
        .ok_or("no RTO after the overflow drops")?;
    let before = f
        .timeline
        .iter()
        .filter(|r| r.t_us < rto.t.as_micros())
        .map(|r| r.cwnd_bytes)
        .next_back()
        .ok_or("no timeline before RTO")?;
    if rto.cwnd * 2 > before {
        return Err(format!("cwnd {} after RTO vs {} before: no collapse", rto.cwnd, before));
    }
    let drops: Vec<SimTime> = f
        .queue_events
        .iter()
        .filter(|e| e.kind == QueueEventKind::DropOverflow && e.t >= rto.t)
        .map(|e| e.t)
        .collect();
    let horizon = SimTime::from_micros(f.timeline.last().map_or(0, |r| r.t_us));
    let mut prev = rto.t;
    let mut quiet = None;
    for t in drops.iter().copied().chain(std::iter::once(horizon)) {
        if t.saturating_sub(prev) >= SimTime::from_millis(500) {
            quiet = Some(prev);
            break;
        }
        prev = t;
    }
    let quiet = quiet.ok_or("overflow drops never ceased for 500 ms")?;
    Ok(format!(
        "saturated {:.3}s, overflow {:.3}s, RTO {:.3}s (cwnd {} -> {}), quiet from {:.3}s",
        sat.as_secs_f64(),
        ovf.as_secs_f64(),
        rto.t.as_secs_f64(),
        before,
        rto.cwnd,
        quiet.as_secs_f64()
    ))
}

pub fn aqm_before_overflow(out: &WorldOutput) -> Result<String, String> {
    let aqm = first_queue(out, QueueEventKind::DropAqm).ok_or("no AQM drops")?;
    match first_queue(out, QueueEventKind::DropOverflow) {
        Some(ovf) if ovf <= aqm => Err(format!("overflow at {ovf:?} not after first AQM drop {aqm:?}")),
        Some(ovf) => Ok(format!("first AQM drop {:.3}s, first overflow {:.3}s", aqm.as_secs_f64(), ovf.as_secs_f64())),
        None => Ok(format!("first AQM drop {:.3}s, no overflow", aqm.as_secs_f64())),
    }
}

pub fn no_overflow_before_ce(out: &WorldOutput) -> Result<String, String> {
    let f = &out.flows[0];
    let ce = f
        .transport_events
        .iter()
        .find(|e| e.kind == TransportEventKind::CeEcho)
        .map(|e| e.t)
        .ok_or("no CE echo")?;
    let early = f
        .queue_events
        .iter()
        .filter(|e| e.kind == QueueEventKind::DropOverflow && e.t < ce)
        .count();
    if early > 0 {
        return Err(format!("{early} overflow drops before first CE echo at {ce:?}"));
    }
    Ok(format!("first CE echo {:.3}s, 0 overflow drops before it", ce.as_secs_f64()))
}

pub fn conserved_everywhere(out: &WorldOutput) -> bool {
    out.results.conservation_ok && out.flows.iter().all(|f| f.timeline.iter().all(|r| r.conserved))
}
