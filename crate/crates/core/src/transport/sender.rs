use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::log::{TransportEvent, TransportEventKind, TransportLog};
use super::rtt::{RttEstimator, DEFAULT_INITIAL_RTO, DEFAULT_RTO_MIN};
use super::{
    new_controller, AckRecord, AckSample, CcAlgo, CcSnapshot, CongestionCause, CongestionControl, EcnReaction,
    LogLevel, RateSample, SrttSample, TransportError, DEFAULT_MSS,
};
use crate::packet::{DataTag, Ecn, FlowId, Packet};
use crate::sim::SimTime;

/// Packets this far below the largest acknowledged one are declared lost.
pub const PACKET_THRESHOLD: u64 = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossDetection {
    #[default]
    PacketThreshold,
    RtoOnly,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SenderConfig {
    pub mss: u32,
    pub cc: CcAlgo,
    /// Send ECT(0) and react to echoed CE marks.
    pub ecn: bool,
    pub loss_detection: LossDetection,
    pub hystart: bool,
    pub pacing: bool,
    pub rto_min: SimTime,
    pub initial_rto: SimTime,
    pub log_level: LogLevel,
    pub seed: u64,
}

impl Default for SenderConfig {
    fn default() -> Self {
        SenderConfig {
            mss: DEFAULT_MSS,
            cc: CcAlgo::default(),
            ecn: false,
            loss_detection: LossDetection::default(),
            hystart: false,
            pacing: true,
            rto_min: DEFAULT_RTO_MIN,
            initial_rto: DEFAULT_INITIAL_RTO,
            log_level: LogLevel::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SenderStats {
    pub packets_sent: u64,
    pub bytes_sent: u64,
    pub retransmissions: u64,
    pub bytes_retransmitted: u64,
    pub losses_detected: u64,
    pub rtos: u64,
    pub congestion_events: u64,
    pub ce_echoed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SendPoll {
    Send(Packet),
    /// Pacing holds the next packet until this instant.
    WaitUntil(SimTime),
    /// Nothing to send, or the window is full.
    Idle,
}

#[derive(Clone, Copy, Debug)]
struct SeqState {
    size: u32,
    tag: DataTag,
    first_sent: Option<SimTime>,
    acked: bool,
    queued_retx: bool,
}

#[derive(Clone, Copy, Debug)]
struct SentPacket {
    seq: u64,
    size: u32,
    sent_at: SimTime,
    delivered: u64,
    delivered_time: SimTime,
    first_sent_time: SimTime,
    app_limited: bool,
}

pub struct Sender {
    flow: FlowId,
    cfg: SenderConfig,
    cc: Box<dyn CongestionControl>,
    rtt: RttEstimator,
    seqs: VecDeque<SeqState>,
    seq_base: u64,
    next_new_seq: u64,
    bulk: bool,
    retx: VecDeque<u64>,
    unacked: BTreeMap<u64, SentPacket>,
    next_pkt_num: u64,
    largest_acked: Option<u64>,
    bytes_in_flight: u64,
    cum_ack: u64,
    ce_seen: u64,
    recovery_start: Option<SimTime>,
    delivered: u64,
    delivered_time: SimTime,
    first_sent_time: SimTime,
    app_limited_until: u64,
    next_send_time: SimTime,
    rto_deadline: Option<SimTime>,
    timer_gen: u64,
    last_phase: &'static str,
    // Window-use tracking per round trip, for cwnd validation.
    round_end: u64,
    bif_peak: [u64; 2],
    blocked: [bool; 2],
    stats: SenderStats,
    srtt_samples: Vec<SrttSample>,
    log: TransportLog,
}

impl Sender {
    pub fn new(flow: FlowId, cfg: SenderConfig) -> Self {
        let cc = new_controller(cfg.cc, cfg.mss, cfg.hystart, cfg.seed, flow.0 as u64);
        let last_phase = cc.phase();
        Sender {
            flow,
            cfg,
            cc,
            rtt: RttEstimator::new(cfg.rto_min, cfg.initial_rto),
            seqs: VecDeque::new(),
            seq_base: 0,
            next_new_seq: 0,
            bulk: false,
            retx: VecDeque::new(),
            unacked: BTreeMap::new(),
            next_pkt_num: 0,
            largest_acked: None,
            bytes_in_flight: 0,
            cum_ack: 0,
            ce_seen: 0,
            recovery_start: None,
            delivered: 0,
            delivered_time: SimTime::ZERO,
            first_sent_time: SimTime::ZERO,
            app_limited_until: 0,
            next_send_time: SimTime::ZERO,
            rto_deadline: None,
            timer_gen: 0,
            last_phase,
            round_end: 0,
            bif_peak: [0; 2],
            blocked: [false; 2],
            stats: SenderStats::default(),
            srtt_samples: Vec::new(),
            log: TransportLog::new(cfg.log_level),
        }
    }

    /// Replaces the controller, e.g. with a custom implementation.
    pub fn with_controller(mut self, cc: Box<dyn CongestionControl>) -> Self {
        self.last_phase = cc.phase();
        self.cc = cc;
        self
    }

    pub fn flow(&self) -> FlowId {
        self.flow
    }

    pub fn config(&self) -> &SenderConfig {
        &self.cfg
    }

    /// Always have a full-sized packet ready to send.
    pub fn set_bulk(&mut self, bulk: bool) {
        self.bulk = bulk;
    }

    pub fn cwnd(&self) -> u64 {
        self.cc.cwnd()
    }

    pub fn bytes_in_flight(&self) -> u64 {
        self.bytes_in_flight
    }

    pub fn srtt(&self) -> Option<SimTime> {
        self.rtt.srtt()
    }

    pub fn rtt(&self) -> &RttEstimator {
        &self.rtt
    }

    pub fn snapshot(&self) -> CcSnapshot {
        self.cc.snapshot()
    }

    pub fn stats(&self) -> SenderStats {
        self.stats
    }

    pub fn cumulative_ack(&self) -> u64 {
        self.cum_ack
    }

    /// First sequence number not yet written by the application.
    pub fn write_end(&self) -> u64 {
        self.seq_base + self.seqs.len() as u64
    }

    pub fn unsent_bytes(&self) -> u64 {
        (self.next_new_seq..self.write_end())
            .map(|s| self.seqs[(s - self.seq_base) as usize].size as u64)
            .sum()
    }

    pub fn events(&self) -> &[TransportEvent] {
        self.log.events()
    }

    pub fn take_events(&mut self) -> Vec<TransportEvent> {
        self.log.take()
    }

    pub fn drain_srtt_samples(&mut self) -> std::vec::Drain<'_, SrttSample> {
        self.srtt_samples.drain(..)
    }

    /// Current RTO deadline and a generation number that changes whenever it moves.
    pub fn timer(&self) -> (Option<SimTime>, u64) {
        (self.rto_deadline, self.timer_gen)
    }

    /// Queues `bytes` of application data as one unit, split into near-equal
    /// packets of at most one MSS. Returns the sequence range used.
    pub fn write(&mut self, unit: u64, bytes: u64) -> std::ops::Range<u64> {
        assert!(bytes > 0, "empty write");
        let mss = self.cfg.mss as u64;
        let n = bytes.div_ceil(mss);
        let (base, rem) = (bytes / n, bytes % n);
        let start = self.write_end();
        for i in 0..n {
            let size = (base + u64::from(i < rem)) as u32;
            self.seqs.push_back(SeqState {
                size,
                tag: DataTag { unit, last: i + 1 == n },
                first_sent: None,
                acked: false,
                queued_retx: false,
            });
        }
        start..self.write_end()
    }

    fn state(&self, seq: u64) -> Option<&SeqState> {
        seq.checked_sub(self.seq_base).and_then(|i| self.seqs.get(i as usize))
    }

    fn state_mut(&mut self, seq: u64) -> Option<&mut SeqState> {
        seq.checked_sub(self.seq_base).and_then(|i| self.seqs.get_mut(i as usize))
    }

    fn is_acked(&self, seq: u64) -> bool {
        self.state(seq).is_none_or(|s| s.acked)
    }

    pub fn pacing_rate(&self) -> Option<f64> {
        if !self.cfg.pacing {
            return None;
        }
        self.cc.pacing_rate().or_else(|| {
            let srtt = self.rtt.srtt()?.as_secs_f64();
            let gain = if self.cc.in_slow_start() { 2.0 } else { 1.25 };
            (srtt > 0.0).then(|| gain * self.cc.cwnd() as f64 * 8.0 / srtt)
        })
    }

    fn event(&mut self, t: SimTime, kind: TransportEventKind, seq: u64, detail: String) {
        if self.log.wants(kind) {
            self.log.push(TransportEvent {
                t,
                kind,
                seq,
                cwnd: self.cc.cwnd(),
                bytes_in_flight: self.bytes_in_flight,
                srtt: self.rtt.srtt(),
                detail,
            });
        }
    }

    fn check_phase(&mut self, now: SimTime) {
        let phase = self.cc.phase();
        if phase != self.last_phase {
            let detail = format!("{}->{}", self.last_phase, phase);
            self.last_phase = phase;
            self.event(now, TransportEventKind::PhaseChange, self.cum_ack, detail);
        }
    }

    fn arm_timer(&mut self, now: SimTime) {
        self.rto_deadline = Some(self.rtt.rto_timer(now));
        self.timer_gen += 1;
    }

    fn disarm_timer(&mut self) {
        if self.rto_deadline.take().is_some() {
            self.timer_gen += 1;
        }
    }

    pub fn poll_send(&mut self, now: SimTime) -> SendPoll {
        while let Some(&s) = self.retx.front() {
            if self.is_acked(s) {
                self.retx.pop_front();
                if let Some(st) = self.state_mut(s) {
                    st.queued_retx = false;
                }
            } else {
                break;
            }
        }
        let (seq, is_retx) = match self.retx.front() {
            Some(&s) => (s, true),
            None if self.next_new_seq < self.write_end() => (self.next_new_seq, false),
            None if self.bulk => {
                let s = self.write(0, self.cfg.mss as u64).start;
                (s, false)
            }
            None => {
                self.app_limited_until = (self.delivered + self.bytes_in_flight).max(1);
                return SendPoll::Idle;
            }
        };
        let size = self.state(seq).expect("candidate is tracked").size;
        if self.bytes_in_flight > 0 && self.bytes_in_flight + size as u64 > self.cc.cwnd() {
            self.blocked[0] = true;
            return SendPoll::Idle;
        }
        let rate = self.pacing_rate();
        if rate.is_some() && now < self.next_send_time {
            return SendPoll::WaitUntil(self.next_send_time);
        }

        if is_retx {
            self.retx.pop_front();
        } else {
            self.next_new_seq += 1;
        }
        let st = self.state_mut(seq).expect("candidate is tracked");
        st.queued_retx = false;
        st.first_sent.get_or_insert(now);
        let tag = st.tag;

        let pkt_num = self.next_pkt_num;
        self.next_pkt_num += 1;
        if self.bytes_in_flight == 0 {
            self.first_sent_time = now;
            self.delivered_time = now;
        }
        self.unacked.insert(
            pkt_num,
            SentPacket {
                seq,
                size,
                sent_at: now,
                delivered: self.delivered,
                delivered_time: self.delivered_time,
                first_sent_time: self.first_sent_time,
                app_limited: self.app_limited_until > 0,
            },
        );
        self.bytes_in_flight += size as u64;
        self.bif_peak[0] = self.bif_peak[0].max(self.bytes_in_flight);
        if let Some(rate) = rate {
            let gap = SimTime::from_secs_f64(size as f64 * 8.0 / rate);
            self.next_send_time = self.next_send_time.max(now) + gap;
        }
        self.stats.packets_sent += 1;
        self.stats.bytes_sent += size as u64;
        if is_retx {
            self.stats.retransmissions += 1;
            self.stats.bytes_retransmitted += size as u64;
        }
        let kind = if is_retx {
            TransportEventKind::Retransmit
        } else {
            TransportEventKind::Send
        };
        self.event(now, kind, seq, String::new());
        if self.rto_deadline.is_none() {
            self.arm_timer(now);
        }
        SendPoll::Send(Packet {
            flow: self.flow,
            seq,
            pkt_num,
            size,
            ecn: if self.cfg.ecn { Ecn::Ect0 } else { Ecn::NotEct },
            sent_at: now,
            enqueued_at: now,
            tag,
        })
    }

    fn declare_lost(&mut self, pkt_num: u64) -> Option<SentPacket> {
        let sp = self.unacked.remove(&pkt_num)?;
        self.bytes_in_flight -= sp.size as u64;
        self.stats.losses_detected += 1;
        if let Some(st) = self.state_mut(sp.seq) {
            if !st.acked && !st.queued_retx {
                st.queued_retx = true;
                self.retx.push_back(sp.seq);
            }
        }
        Some(sp)
    }

    /// Starts a congestion epoch unless `sent_at` predates the current one.
    fn congestion_event(&mut self, now: SimTime, sent_at: SimTime, cause: CongestionCause) -> bool {
        if self.recovery_start.is_some_and(|r| sent_at <= r) {
            return false;
        }
        self.recovery_start = Some(now);
        self.cc.on_congestion(now, cause, self.bytes_in_flight);
        self.stats.congestion_events += 1;
        true
    }

    pub fn on_ack(&mut self, ack: &AckRecord, now: SimTime) -> Result<(), TransportError> {
        if ack.pkt_num >= self.next_pkt_num {
            return Err(TransportError::AckForUnsent {
                pkt_num: ack.pkt_num,
                next: self.next_pkt_num,
            });
        }
        let newly_ce = ack.ecn_ce_count.saturating_sub(self.ce_seen);
        if newly_ce > 1 {
            return Err(TransportError::CeExceedsAcked { ce: newly_ce, acked: 1 });
        }
        self.ce_seen = self.ce_seen.max(ack.ecn_ce_count);

        if let Some(st) = self.state_mut(ack.seq) {
            if !st.acked {
                st.acked = true;
                let first = st.first_sent.expect("acked data was sent");
                self.srtt_samples.push(SrttSample {
                    seq: ack.seq,
                    first_sent_at: first,
                    first_acked_at: now,
                });
            }
        }

        let sp = self.unacked.remove(&ack.pkt_num);
        let sent_at = sp.map_or(now, |p| p.sent_at);
        if newly_ce > 0 {
            self.stats.ce_echoed += 1;
        }
        if self.cfg.ecn {
            let reaction = self.cc.on_ecn(newly_ce, 1, now);
            if newly_ce > 0 {
                let reduced = reaction == EcnReaction::AsCongestion
                    && self.congestion_event(now, sent_at, CongestionCause::Ecn);
                let detail = if reduced { "cwnd_reduced" } else { "" };
                self.event(now, TransportEventKind::CeEcho, ack.seq, detail.into());
            }
        }

        if let Some(sp) = sp {
            self.bytes_in_flight -= sp.size as u64;
            let rtt = now - sp.sent_at;
            self.rtt.on_sample(rtt);
            self.rtt.reset_backoff();
            self.delivered += sp.size as u64;
            self.delivered_time = now;
            let send_elapsed = sp.sent_at - sp.first_sent_time;
            let ack_elapsed = now - sp.delivered_time;
            let interval = send_elapsed.max(ack_elapsed);
            self.first_sent_time = sp.sent_at;
            let min_rtt = self.rtt.min_rtt().unwrap_or(rtt);
            let rate = (interval > SimTime::ZERO && interval >= min_rtt).then(|| RateSample {
                delivery_rate_bps: (self.delivered - sp.delivered) as f64 * 8.0 / interval.as_secs_f64(),
                prior_delivered: sp.delivered,
                is_app_limited: sp.app_limited,
            });
            if self.app_limited_until > 0 && self.delivered > self.app_limited_until {
                self.app_limited_until = 0;
            }
            self.largest_acked = Some(self.largest_acked.map_or(ack.pkt_num, |l| l.max(ack.pkt_num)));
            if ack.pkt_num >= self.round_end {
                self.round_end = self.next_pkt_num;
                self.bif_peak = [0, self.bif_peak[0]];
                self.blocked = [false, self.blocked[0]];
            }
            let cwnd = self.cc.cwnd();
            let peak = self.bif_peak[0].max(self.bif_peak[1]);
            let cwnd_limited =
                self.blocked.contains(&true) || (self.cc.in_slow_start() && 2 * peak >= cwnd);
            self.cc.on_ack(&AckSample {
                now,
                acked_bytes: sp.size as u64,
                rtt,
                min_rtt,
                srtt: self.rtt.srtt().unwrap_or(rtt),
                bytes_in_flight: self.bytes_in_flight,
                delivered: self.delivered,
                rate,
                largest_acked: self.largest_acked.unwrap_or(0),
                next_pkt_num: self.next_pkt_num,
                cwnd_limited,
            });
            self.event(now, TransportEventKind::Ack, ack.seq, String::new());
        }

        if ack.cumulative_ack > self.cum_ack {
            self.cum_ack = ack.cumulative_ack;
            while self.seq_base < self.cum_ack && self.seqs.front().is_some_and(|s| s.acked) {
                self.seqs.pop_front();
                self.seq_base += 1;
            }
            if !self.unacked.is_empty() {
                self.arm_timer(now);
            }
        }

        if self.cfg.loss_detection == LossDetection::PacketThreshold {
            if let Some(limit) = self.largest_acked.and_then(|l| l.checked_sub(PACKET_THRESHOLD)) {
                let lost: Vec<u64> = self.unacked.range(..=limit).map(|(&k, _)| k).collect();
                let mut newest = None;
                let mut lost_seqs = Vec::with_capacity(lost.len());
                for k in lost {
                    if let Some(p) = self.declare_lost(k) {
                        newest = Some(newest.map_or(p.sent_at, |t: SimTime| t.max(p.sent_at)));
                        lost_seqs.push(p.seq);
                    }
                }
                if let Some(t) = newest {
                    let reduced = self.congestion_event(now, t, CongestionCause::Loss);
                    for (i, s) in lost_seqs.into_iter().enumerate() {
                        let detail = if reduced && i == 0 { "cwnd_reduced" } else { "" };
                        self.event(now, TransportEventKind::Loss, s, detail.into());
                    }
                }
            }
        }

        if self.unacked.is_empty() {
            self.disarm_timer();
        }
        self.check_phase(now);
        Ok(())
    }

    /// Retransmission timeout: everything outstanding is presumed lost.
    pub fn on_rto(&mut self, now: SimTime) {
        self.rto_deadline = None;
        self.timer_gen += 1;
        if self.unacked.is_empty() {
            return;
        }
        self.stats.rtos += 1;
        let all: Vec<u64> = self.unacked.keys().copied().collect();
        let mut lost_seqs = Vec::with_capacity(all.len());
        for k in all {
            if let Some(p) = self.declare_lost(k) {
                lost_seqs.push(p.seq);
            }
        }
        debug_assert_eq!(self.bytes_in_flight, 0);
        self.recovery_start = Some(now);
        self.cc.on_congestion(now, CongestionCause::Rto, 0);
        self.stats.congestion_events += 1;
        self.rtt.on_timeout();
        self.next_send_time = now;
        let first = lost_seqs.first().copied().unwrap_or(self.cum_ack);
        let detail = format!("backoff={}", self.rtt.backoff());
        self.event(now, TransportEventKind::Rto, first, detail);
        for s in lost_seqs {
            self.event(now, TransportEventKind::Loss, s, String::new());
        }
        self.check_phase(now);
    }
}
