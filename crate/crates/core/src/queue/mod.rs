//! Per-flow RLC buffers with pluggable AQM, drained by a round-robin scheduler.
//!
//! RED and ARED act on arrival; CoDel and L4S act on departure because they
//! need the sojourn time. In [`ActionMode::Mark`] an action on an ECN-capable
//! packet sets CE and keeps the packet; non-ECT packets are always dropped.

pub mod codel;
pub mod l4s;
pub mod red;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::{Ecn, FlowId, Packet};
use crate::sim::{RandomStream, SimTime, StreamKind};

pub use codel::{CodelAction, CodelConfig, CodelState};
pub use l4s::{l4s_mark_probability, l4s_temp, L4sConfig, L4sState};
pub use red::{
    ared_adapt, red_act_probability, red_decision, update_avg, AredConfig, RedConfig, RedDecision,
    RedState,
};

#[derive(Debug, Error)]
#[error("invalid queue configuration for flow {flow}: {msg}")]
pub struct QueueError {
    pub flow: FlowId,
    pub msg: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    #[default]
    Drop,
    Mark,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AqmConfig {
    DropTail,
    Red(RedConfig),
    Ared(AredConfig),
    Codel(CodelConfig),
    L4s(L4sConfig),
}

impl AqmConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AqmConfig::DropTail => "droptail",
            AqmConfig::Red(_) => "red",
            AqmConfig::Ared(_) => "ared",
            AqmConfig::Codel(_) => "codel",
            AqmConfig::L4s(_) => "l4s",
        }
    }
}

/// Buffer size from a bandwidth-delay product, with RTT taken as twice the one-way delay.
pub fn bdp_buffer_bytes(nominal_bw_bps: u64, one_way_delay: SimTime, fraction_pct: f64) -> u64 {
    let bits_ns = nominal_bw_bps as u128 * 2 * one_way_delay.as_nanos() as u128;
    let bytes = bits_ns as f64 * fraction_pct / (100.0 * 8.0 * 1e9);
    (bytes + 1e-9).floor() as u64
}

enum AqmState {
    DropTail,
    Red {
        cfg: RedConfig,
        state: RedState,
        coin: RandomStream,
    },
    Ared {
        cfg: AredConfig,
        state: RedState,
        max_p: f64,
        coin: RandomStream,
    },
    Codel {
        cfg: CodelConfig,
        state: CodelState,
    },
    L4s {
        cfg: L4sConfig,
        state: L4sState,
        coin: RandomStream,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Enqueued { marked: bool },
    DroppedAqm,
    DroppedOverflow,
}

/// Packet counters. `enqueued` counts every arrival offered to the queue.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueCounters {
    pub enqueued: u64,
    pub delivered: u64,
    pub dropped_aqm: u64,
    pub dropped_overflow: u64,
    pub marked: u64,
}

impl QueueCounters {
    /// `enqueued == delivered + dropped_aqm + dropped_overflow + queued`.
    pub fn conserved(&self, queued: u64) -> bool {
        self.enqueued == self.delivered + self.dropped_aqm + self.dropped_overflow + queued
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueEventKind {
    Enqueue,
    Mark,
    DropAqm,
    DropOverflow,
    Dequeue,
}

impl QueueEventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            QueueEventKind::Enqueue => "enqueue",
            QueueEventKind::Mark => "mark",
            QueueEventKind::DropAqm => "drop_aqm",
            QueueEventKind::DropOverflow => "drop_overflow",
            QueueEventKind::Dequeue => "dequeue",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueEvent {
    pub t: SimTime,
    pub kind: QueueEventKind,
    pub seq: u64,
    pub size: u32,
    /// Occupancy in bytes after the event.
    pub occupancy: u64,
    /// Sojourn for dequeue (and dequeue-side drop/mark) events.
    pub qdelay: Option<SimTime>,
}

pub struct FlowQueue {
    flow: FlowId,
    buffer: VecDeque<Packet>,
    capacity: u64,
    occupancy: u64,
    mode: ActionMode,
    aqm: AqmState,
    counters: QueueCounters,
    log: Option<Vec<QueueEvent>>,
}

struct CodelView<'a> {
    buffer: &'a mut VecDeque<Packet>,
    occupancy: &'a mut u64,
}

impl codel::CodelBuffer for CodelView<'_> {
    fn pop(&mut self) -> Option<Packet> {
        let p = self.buffer.pop_front()?;
        *self.occupancy -= p.size as u64;
        Some(p)
    }

    fn bytes(&self) -> u64 {
        *self.occupancy
    }
}

impl FlowQueue {
    /// DropTail always runs in drop mode.
    pub fn new(
        flow: FlowId,
        capacity: u64,
        aqm: AqmConfig,
        mode: ActionMode,
        seed: u64,
    ) -> Result<Self, QueueError> {
        let err = |msg: String| QueueError { flow, msg };
        let coin = |kind| RandomStream::new(seed, kind, flow.0 as u64);
        let aqm = match aqm {
            AqmConfig::DropTail => AqmState::DropTail,
            AqmConfig::Red(cfg) => {
                cfg.validate(capacity).map_err(err)?;
                AqmState::Red {
                    cfg,
                    state: RedState::default(),
                    coin: coin(StreamKind::RedCoin),
                }
            }
            AqmConfig::Ared(cfg) => {
                cfg.validate(capacity).map_err(err)?;
                AqmState::Ared {
                    cfg,
                    state: RedState::default(),
                    max_p: cfg.red.p_max,
                    coin: coin(StreamKind::RedCoin),
                }
            }
            AqmConfig::Codel(cfg) => {
                cfg.validate().map_err(err)?;
                AqmState::Codel {
                    cfg,
                    state: CodelState::default(),
                }
            }
            AqmConfig::L4s(cfg) => {
                cfg.validate().map_err(err)?;
                AqmState::L4s {
                    cfg,
                    state: L4sState::default(),
                    coin: coin(StreamKind::L4sCoin),
                }
            }
        };
        let mode = if matches!(aqm, AqmState::DropTail) {
            ActionMode::Drop
        } else {
            mode
        };
        Ok(FlowQueue {
            flow,
            buffer: VecDeque::new(),
            capacity,
            occupancy: 0,
            mode,
            aqm,
            counters: QueueCounters::default(),
            log: None,
        })
    }

    pub fn with_event_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn flow(&self) -> FlowId {
        self.flow
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn occupancy(&self) -> u64 {
        self.occupancy
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn mode(&self) -> ActionMode {
        self.mode
    }

    pub fn counters(&self) -> QueueCounters {
        self.counters
    }

    pub fn events(&self) -> Option<&[QueueEvent]> {
        self.log.as_deref()
    }

    pub fn take_events(&mut self) -> Vec<QueueEvent> {
        self.log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Current RED/ARED average, if any.
    pub fn red_avg(&self) -> Option<f64> {
        match &self.aqm {
            AqmState::Red { state, .. } | AqmState::Ared { state, .. } => Some(state.avg),
            _ => None,
        }
    }

    pub fn ared_max_p(&self) -> Option<f64> {
        match &self.aqm {
            AqmState::Ared { max_p, .. } => Some(*max_p),
            _ => None,
        }
    }

    pub fn ared_interval(&self) -> Option<SimTime> {
        match &self.aqm {
            AqmState::Ared { cfg, .. } => Some(cfg.interval),
            _ => None,
        }
    }

    /// Periodic ARED step; no-op for other disciplines.
    pub fn ared_tick(&mut self) {
        if let AqmState::Ared { cfg, state, max_p, .. } = &mut self.aqm {
            *max_p = ared_adapt(state.avg, *max_p, cfg);
        }
    }

    fn record(&mut self, t: SimTime, kind: QueueEventKind, p: &Packet, qdelay: Option<SimTime>) {
        if let Some(log) = self.log.as_mut() {
            log.push(QueueEvent {
                t,
                kind,
                seq: p.seq,
                size: p.size,
                occupancy: self.occupancy,
                qdelay,
            });
        }
    }

    fn can_mark(&self, p: &Packet) -> bool {
        self.mode == ActionMode::Mark && p.ecn != Ecn::NotEct
    }

    pub fn enqueue(&mut self, mut pkt: Packet, now: SimTime) -> EnqueueOutcome {
        debug_assert!(pkt.size > 0);
        self.counters.enqueued += 1;
        let occupancy = self.occupancy as f64;
        let decision = match &mut self.aqm {
            AqmState::Red { cfg, state, coin } => {
                state.avg = update_avg(state.avg, occupancy, cfg.w_q);
                Some(red_decision(state, cfg, coin))
            }
            AqmState::Ared {
                cfg,
                state,
                max_p,
                coin,
            } => {
                let red = RedConfig {
                    p_max: *max_p,
                    ..cfg.red
                };
                state.avg = update_avg(state.avg, occupancy, red.w_q);
                Some(red_decision(state, &red, coin))
            }
            _ => None,
        };
        let mut marked = false;
        if decision == Some(RedDecision::Act) {
            if self.can_mark(&pkt) {
                pkt.ecn = Ecn::Ce;
                marked = true;
            } else {
                self.counters.dropped_aqm += 1;
                self.record(now, QueueEventKind::DropAqm, &pkt, None);
                return EnqueueOutcome::DroppedAqm;
            }
        }
        if self.occupancy + pkt.size as u64 > self.capacity {
            self.counters.dropped_overflow += 1;
            self.record(now, QueueEventKind::DropOverflow, &pkt, None);
            return EnqueueOutcome::DroppedOverflow;
        }
        pkt.enqueued_at = now;
        self.occupancy += pkt.size as u64;
        self.buffer.push_back(pkt);
        self.record(now, QueueEventKind::Enqueue, &pkt, None);
        if marked {
            self.counters.marked += 1;
            self.record(now, QueueEventKind::Mark, &pkt, None);
        }
        EnqueueOutcome::Enqueued { marked }
    }

    /// Pops the next deliverable packet, applying dequeue-side AQM.
    /// Packets dropped on the way are appended to `dropped`.
    pub fn dequeue(&mut self, now: SimTime, dropped: &mut Vec<Packet>) -> Option<Packet> {
        let mut actions: Vec<(Packet, bool)> = Vec::new();
        let out = match &mut self.aqm {
            AqmState::DropTail | AqmState::Red { .. } | AqmState::Ared { .. } => {
                let p = self.buffer.pop_front();
                if let Some(p) = &p {
                    self.occupancy -= p.size as u64;
                }
                p
            }
            AqmState::Codel { cfg, state } => {
                let mut view = CodelView {
                    buffer: &mut self.buffer,
                    occupancy: &mut self.occupancy,
                };
                state.dequeue(&mut view, now, cfg, self.mode == ActionMode::Mark, |p, a| {
                    actions.push((*p, a == CodelAction::Marked))
                })
            }
            AqmState::L4s { cfg, state, coin } => {
                let mut out = None;
                while let Some(mut p) = self.buffer.pop_front() {
                    self.occupancy -= p.size as u64;
                    let qdelay = now.saturating_sub(p.enqueued_at);
                    let prob = l4s_mark_probability(qdelay, cfg, state, now);
                    if coin.bernoulli(prob) {
                        if self.mode == ActionMode::Mark && p.ecn != Ecn::NotEct {
                            p.ecn = Ecn::Ce;
                            actions.push((p, true));
                        } else {
                            actions.push((p, false));
                            continue;
                        }
                    }
                    out = Some(p);
                    break;
                }
                out
            }
        };
        for (p, marked) in actions {
            let qdelay = Some(now.saturating_sub(p.enqueued_at));
            if marked {
                self.counters.marked += 1;
                self.record(now, QueueEventKind::Mark, &p, qdelay);
            } else {
                self.counters.dropped_aqm += 1;
                self.record(now, QueueEventKind::DropAqm, &p, qdelay);
                dropped.push(p);
            }
        }
        if let Some(p) = &out {
            self.counters.delivered += 1;
            self.record(now, QueueEventKind::Dequeue, p, Some(now.saturating_sub(p.enqueued_at)));
        }
        out
    }
}

/// Plain round robin over flow queues, resuming after the last-served flow.
#[derive(Clone, Debug, Default)]
pub struct RoundRobin {
    next: usize,
}

impl RoundRobin {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dequeue(
        &mut self,
        flows: &mut [FlowQueue],
        now: SimTime,
        dropped: &mut Vec<Packet>,
    ) -> Option<(FlowId, Packet)> {
        let n = flows.len();
        for i in 0..n {
            let idx = (self.next + i) % n;
            if flows[idx].is_empty() {
                continue;
            }
            if let Some(p) = flows[idx].dequeue(now, dropped) {
                self.next = (idx + 1) % n;
                return Some((flows[idx].flow(), p));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pkt(seq: u64, size: u32) -> Packet {
        Packet::new(FlowId(0), seq, size, SimTime::ZERO).with_ecn(Ecn::Ect0)
    }

    fn red_cfg() -> RedConfig {
        RedConfig {
            min_th: 2_000.0,
            max_th: 4_000.0,
            p_max: 0.1,
            w_q: 1.0,
        }
    }

    #[test]
    fn bdp_examples() {
        assert_eq!(bdp_buffer_bytes(500_000_000, SimTime::from_millis(4), 200.0), 1_000_000);
        assert_eq!(bdp_buffer_bytes(123_456_789, SimTime::from_millis(7), 0.0), 0);
        assert_eq!(bdp_buffer_bytes(100_000_000, SimTime::from_millis(5), 100.0), 125_000);
    }

    #[test]
    fn droptail_accepts_until_full() {
        let mut q = FlowQueue::new(FlowId(0), 3_000, AqmConfig::DropTail, ActionMode::Mark, 0).unwrap();
        assert_eq!(q.mode(), ActionMode::Drop);
        assert_eq!(q.enqueue(pkt(0, 1500), SimTime::ZERO), EnqueueOutcome::Enqueued { marked: false });
        assert_eq!(q.enqueue(pkt(1, 1500), SimTime::ZERO), EnqueueOutcome::Enqueued { marked: false });
        assert_eq!(q.occupancy(), q.capacity());
        assert_eq!(q.enqueue(pkt(2, 1), SimTime::ZERO), EnqueueOutcome::DroppedOverflow);
        assert!(q.counters().conserved(q.len() as u64));
    }

    #[test]
    fn red_mark_mode_keeps_packets_above_max() {
        let mut q = FlowQueue::new(FlowId(0), 10_000, AqmConfig::Red(red_cfg()), ActionMode::Mark, 0).unwrap();
        for i in 0..4 {
            q.enqueue(pkt(i, 1000), SimTime::ZERO);
        }
        // avg (w_q = 1) now equals the 4000-byte occupancy >= max_th.
        match q.enqueue(pkt(9, 1000), SimTime::ZERO) {
            EnqueueOutcome::Enqueued { marked } => assert!(marked),
            other => panic!("{other:?}"),
        }
        let mut drop_q =
            FlowQueue::new(FlowId(0), 10_000, AqmConfig::Red(red_cfg()), ActionMode::Drop, 0).unwrap();
        for i in 0..4 {
            drop_q.enqueue(pkt(i, 1000), SimTime::ZERO);
        }
        assert_eq!(drop_q.enqueue(pkt(9, 1000), SimTime::ZERO), EnqueueOutcome::DroppedAqm);
    }

    #[test]
    fn non_ect_packets_are_dropped_in_mark_mode() {
        let mut q = FlowQueue::new(FlowId(0), 10_000, AqmConfig::Red(red_cfg()), ActionMode::Mark, 0).unwrap();
        for i in 0..4 {
            q.enqueue(pkt(i, 1000), SimTime::ZERO);
        }
        let p = Packet::new(FlowId(0), 9, 1000, SimTime::ZERO);
        assert_eq!(q.enqueue(p, SimTime::ZERO), EnqueueOutcome::DroppedAqm);
    }

    #[test]
    fn mark_mode_still_overflows_when_full() {
        let cfg = RedConfig {
            min_th: 500.0,
            max_th: 1000.0,
            ..red_cfg()
        };
        let mut q = FlowQueue::new(FlowId(0), 2_000, AqmConfig::Red(cfg), ActionMode::Mark, 0).unwrap();
        q.enqueue(pkt(0, 1000), SimTime::ZERO);
        q.enqueue(pkt(1, 1000), SimTime::ZERO);
        assert_eq!(q.enqueue(pkt(2, 1000), SimTime::ZERO), EnqueueOutcome::DroppedOverflow);
    }

    #[test]
    fn l4s_drops_everything_above_high_threshold_in_drop_mode() {
        let cfg = L4sConfig::new(SimTime::from_millis(1), SimTime::from_millis(2));
        let mut q = FlowQueue::new(FlowId(0), 100_000, AqmConfig::L4s(cfg), ActionMode::Drop, 0).unwrap();
        for i in 0..5 {
            q.enqueue(pkt(i, 1000), SimTime::ZERO);
        }
        let mut dropped = vec![];
        assert!(q.dequeue(SimTime::from_millis(5), &mut dropped).is_none());
        assert_eq!(dropped.len(), 5);
        assert!(q.counters().conserved(0));
    }

    #[test]
    fn l4s_marks_in_mark_mode() {
        let cfg = L4sConfig::new(SimTime::from_millis(1), SimTime::from_millis(2));
        let mut q = FlowQueue::new(FlowId(0), 100_000, AqmConfig::L4s(cfg), ActionMode::Mark, 0).unwrap();
        q.enqueue(pkt(0, 1000), SimTime::ZERO);
        let mut dropped = vec![];
        let p = q.dequeue(SimTime::from_millis(5), &mut dropped).unwrap();
        assert_eq!(p.ecn, Ecn::Ce);
        assert!(dropped.is_empty());
        assert_eq!(q.counters().marked, 1);
    }

    fn rr_flows(n: u32) -> Vec<FlowQueue> {
        (0..n)
            .map(|f| FlowQueue::new(FlowId(f), 1 << 30, AqmConfig::DropTail, ActionMode::Drop, 0).unwrap())
            .collect()
    }

    #[test]
    fn round_robin_order() {
        let mut flows = rr_flows(3);
        for (f, q) in flows.iter_mut().enumerate() {
            for s in 0..2 {
                let mut p = pkt(s, 100);
                p.flow = FlowId(f as u32);
                q.enqueue(p, SimTime::ZERO);
            }
        }
        let mut rr = RoundRobin::new();
        let mut dropped = vec![];
        let order: Vec<u32> = std::iter::from_fn(|| rr.dequeue(&mut flows, SimTime::ZERO, &mut dropped))
            .map(|(f, _)| f.0)
            .collect();
        assert_eq!(order, vec![0, 1, 2, 0, 1, 2]);
    }

    #[test]
    fn round_robin_skips_empty() {
        let mut flows = rr_flows(3);
        for f in [0usize, 2] {
            for s in 0..2 {
                let mut p = pkt(s, 100);
                p.flow = FlowId(f as u32);
                flows[f].enqueue(p, SimTime::ZERO);
            }
        }
        let mut rr = RoundRobin::new();
        let mut dropped = vec![];
        let order: Vec<u32> = std::iter::from_fn(|| rr.dequeue(&mut flows, SimTime::ZERO, &mut dropped))
            .map(|(f, _)| f.0)
            .collect();
        assert_eq!(order, vec![0, 2, 0, 2]);
    }

    #[test]
    fn equal_backlog_shares_equally() {
        let mut flows = rr_flows(5);
        let mut rr = RoundRobin::new();
        let mut dropped = vec![];
        let mut served = [0u64; 5];
        for round in 0..10_000u64 {
            for (f, q) in flows.iter_mut().enumerate() {
                if q.len() < 3 {
                    let mut p = pkt(round, 1200);
                    p.flow = FlowId(f as u32);
                    q.enqueue(p, SimTime::ZERO);
                }
            }
            let (f, _) = rr.dequeue(&mut flows, SimTime::ZERO, &mut dropped).unwrap();
            served[f.index()] += 1;
        }
        for s in served {
            assert!((s as i64 - 2000).abs() <= 1, "{served:?}");
        }
    }

    #[test]
    fn event_log_tracks_occupancy() {
        let mut q = FlowQueue::new(FlowId(0), 2_000, AqmConfig::DropTail, ActionMode::Drop, 0)
            .unwrap()
            .with_event_log();
        q.enqueue(pkt(0, 1500), SimTime::ZERO);
        q.enqueue(pkt(1, 1500), SimTime::from_millis(1));
        let mut d = vec![];
        q.dequeue(SimTime::from_millis(3), &mut d);
        let ev = q.events().unwrap();
        assert_eq!(ev.len(), 3);
        assert_eq!(ev[1].kind, QueueEventKind::DropOverflow);
        assert_eq!(ev[2].qdelay, Some(SimTime::from_millis(3)));
        assert_eq!(ev[2].occupancy, 0);
    }
}
