use std::collections::VecDeque;

use super::{AckSample, CcSnapshot, CongestionCause, CongestionControl, EcnReaction, INITIAL_WINDOW_PACKETS};
use crate::sim::{RandomStream, SimTime, StreamKind};

pub const STARTUP_GAIN: f64 = 2.89;
pub const PROBE_BW_GAINS: [f64; 8] = [1.25, 0.75, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
pub const BW_WINDOW_ROUNDS: u64 = 10;
pub const RT_PROP_WINDOW: SimTime = SimTime::from_secs(10);
pub const PROBE_RTT_DURATION: SimTime = SimTime::from_millis(200);
const MIN_CWND_PACKETS: u64 = 4;
const PROBE_BW_CWND_GAIN: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BbrMode {
    Startup,
    Drain,
    ProbeBw,
    ProbeRtt,
}

/// Single-flow BBR: windowed-max bandwidth, windowed-min RTT, gain cycling.
#[derive(Clone, Debug)]
pub struct BbrLite {
    mss: u64,
    mode: BbrMode,
    cwnd: u64,
    prior_cwnd: u64,
    bw_filter: VecDeque<(u64, f64)>,
    btl_bw: f64,
    rt_prop: Option<SimTime>,
    rt_prop_stamp: SimTime,
    round_count: u64,
    next_round_delivered: u64,
    round_start: bool,
    full_bw: f64,
    full_bw_count: u32,
    filled_pipe: bool,
    pacing_gain: f64,
    cwnd_gain: f64,
    cycle_index: usize,
    cycle_stamp: SimTime,
    probe_rtt_done: Option<SimTime>,
    probe_rtt_round_done: bool,
    /// Samples sent before this delivered count are treated as app-limited.
    probe_rtt_bubble: u64,
    recovery_until_round: Option<u64>,
    ce_round: Option<u64>,
    srtt: Option<SimTime>,
    rng: RandomStream,
}

impl BbrLite {
    pub fn new(mss: u32, seed: u64, flow: u64) -> Self {
        let mss = mss as u64;
        BbrLite {
            mss,
            mode: BbrMode::Startup,
            cwnd: INITIAL_WINDOW_PACKETS * mss,
            prior_cwnd: 0,
            bw_filter: VecDeque::new(),
            btl_bw: 0.0,
            rt_prop: None,
            rt_prop_stamp: SimTime::ZERO,
            round_count: 0,
            next_round_delivered: 0,
            round_start: false,
            full_bw: 0.0,
            full_bw_count: 0,
            filled_pipe: false,
            pacing_gain: STARTUP_GAIN,
            cwnd_gain: STARTUP_GAIN,
            cycle_index: 0,
            cycle_stamp: SimTime::ZERO,
            probe_rtt_done: None,
            probe_rtt_round_done: false,
            probe_rtt_bubble: 0,
            recovery_until_round: None,
            ce_round: None,
            srtt: None,
            rng: RandomStream::new(seed, StreamKind::BbrCycle, flow),
        }
    }

    pub fn mode(&self) -> BbrMode {
        self.mode
    }

    pub fn btl_bw(&self) -> f64 {
        self.btl_bw
    }

    pub fn rt_prop(&self) -> Option<SimTime> {
        self.rt_prop
    }

    pub fn cycle_index(&self) -> usize {
        self.cycle_index
    }

    pub fn pacing_gain(&self) -> f64 {
        self.pacing_gain
    }

    fn min_cwnd(&self) -> u64 {
        MIN_CWND_PACKETS * self.mss
    }

    fn bdp(&self, gain: f64) -> Option<u64> {
        let rt = self.rt_prop?;
        if self.btl_bw <= 0.0 {
            return None;
        }
        Some((gain * self.btl_bw / 8.0 * rt.as_secs_f64()) as u64)
    }

    fn update_bw(&mut self, ack: &AckSample) {
        self.round_start = false;
        let Some(rs) = ack.rate else { return };
        if rs.prior_delivered >= self.next_round_delivered {
            self.next_round_delivered = ack.delivered;
            self.round_count += 1;
            self.round_start = true;
        }
        let app_limited = rs.is_app_limited || rs.prior_delivered < self.probe_rtt_bubble;
        if !app_limited || rs.delivery_rate_bps >= self.btl_bw {
            while self.bw_filter.back().is_some_and(|&(_, v)| v <= rs.delivery_rate_bps) {
                self.bw_filter.pop_back();
            }
            self.bw_filter.push_back((self.round_count, rs.delivery_rate_bps));
        }
        while self.bw_filter.len() > 1
            && self.bw_filter.front().is_some_and(|&(r, _)| r + BW_WINDOW_ROUNDS <= self.round_count)
        {
            self.bw_filter.pop_front();
        }
        if let Some(&(_, v)) = self.bw_filter.front() {
            self.btl_bw = v;
        }
    }

    fn enter_probe_bw(&mut self, now: SimTime) {
        self.mode = BbrMode::ProbeBw;
        self.cwnd_gain = PROBE_BW_CWND_GAIN;
        // Any phase but the drain phase.
        let i = self.rng.index(PROBE_BW_GAINS.len() - 1);
        self.cycle_index = if i >= 1 { i + 1 } else { i };
        self.cycle_stamp = now;
        self.pacing_gain = PROBE_BW_GAINS[self.cycle_index];
    }

    fn advance_cycle(&mut self, now: SimTime) {
        if self.mode != BbrMode::ProbeBw {
            return;
        }
        let Some(rt) = self.rt_prop else { return };
        if now - self.cycle_stamp > rt {
            self.cycle_index = (self.cycle_index + 1) % PROBE_BW_GAINS.len();
            self.cycle_stamp = now;
            self.pacing_gain = PROBE_BW_GAINS[self.cycle_index];
        }
    }

    fn check_full_pipe(&mut self, ack: &AckSample) {
        if self.filled_pipe || !self.round_start || ack.rate.is_some_and(|r| r.is_app_limited) {
            return;
        }
        if self.btl_bw >= self.full_bw * 1.25 {
            self.full_bw = self.btl_bw;
            self.full_bw_count = 0;
            return;
        }
        self.full_bw_count += 1;
        if self.full_bw_count >= 3 {
            self.filled_pipe = true;
        }
    }

    fn check_drain(&mut self, ack: &AckSample) {
        if self.mode == BbrMode::Startup && self.filled_pipe {
            self.mode = BbrMode::Drain;
            self.pacing_gain = 1.0 / STARTUP_GAIN;
            self.cwnd_gain = STARTUP_GAIN;
        }
        if self.mode == BbrMode::Drain && self.bdp(1.0).is_some_and(|b| ack.bytes_in_flight <= b) {
            self.enter_probe_bw(ack.now);
        }
    }

    /// Returns whether the min-RTT filter had expired before this sample.
    fn update_rt_prop(&mut self, ack: &AckSample) -> bool {
        let expired = ack.now > self.rt_prop_stamp + RT_PROP_WINDOW;
        if self.rt_prop.is_none_or(|rt| ack.rtt < rt) || expired {
            self.rt_prop = Some(ack.rtt);
            self.rt_prop_stamp = ack.now;
        }
        expired
    }

    fn check_probe_rtt(&mut self, ack: &AckSample, expired: bool) {
        if self.mode != BbrMode::ProbeRtt && expired {
            self.mode = BbrMode::ProbeRtt;
            self.pacing_gain = 1.0;
            self.cwnd_gain = 1.0;
            if self.recovery_until_round.is_none() {
                self.prior_cwnd = self.cwnd;
            }
            self.probe_rtt_done = None;
        }
        if self.mode != BbrMode::ProbeRtt {
            return;
        }
        // The 4-packet window would otherwise age the real bandwidth out of the filter.
        self.probe_rtt_bubble = (ack.delivered + ack.bytes_in_flight).max(1);
        match self.probe_rtt_done {
            None if ack.bytes_in_flight <= self.min_cwnd() => {
                self.probe_rtt_done = Some(ack.now + PROBE_RTT_DURATION);
                self.probe_rtt_round_done = false;
                self.next_round_delivered = ack.delivered;
            }
            None => {}
            Some(done) => {
                if self.round_start {
                    self.probe_rtt_round_done = true;
                }
                if self.probe_rtt_round_done && ack.now >= done {
                    self.rt_prop_stamp = ack.now;
                    self.cwnd = self.cwnd.max(self.prior_cwnd);
                    if self.filled_pipe {
                        self.enter_probe_bw(ack.now);
                    } else {
                        self.mode = BbrMode::Startup;
                        self.pacing_gain = STARTUP_GAIN;
                        self.cwnd_gain = STARTUP_GAIN;
                    }
                }
            }
        }
    }

    fn set_cwnd(&mut self, ack: &AckSample) {
        if let Some(r) = self.recovery_until_round {
            if self.round_count <= r {
                self.cwnd = (ack.bytes_in_flight + ack.acked_bytes).max(self.min_cwnd());
                return;
            }
            self.recovery_until_round = None;
            self.cwnd = self.cwnd.max(self.prior_cwnd);
        }
        match self.bdp(self.cwnd_gain) {
            Some(target) if self.filled_pipe => {
                self.cwnd = (self.cwnd + ack.acked_bytes).min(target);
            }
            Some(target) => {
                if self.cwnd < target {
                    self.cwnd += ack.acked_bytes;
                }
            }
            None => self.cwnd += ack.acked_bytes,
        }
        self.cwnd = self.cwnd.max(self.min_cwnd());
        if self.mode == BbrMode::ProbeRtt {
            self.cwnd = self.cwnd.min(self.min_cwnd());
        }
    }
}

impl CongestionControl for BbrLite {
    fn on_ack(&mut self, ack: &AckSample) {
        self.srtt = Some(ack.srtt);
        self.update_bw(ack);
        self.advance_cycle(ack.now);
        self.check_full_pipe(ack);
        self.check_drain(ack);
        let expired = self.update_rt_prop(ack);
        self.check_probe_rtt(ack, expired);
        self.set_cwnd(ack);
    }

    fn on_congestion(&mut self, _now: SimTime, cause: CongestionCause, bytes_in_flight: u64) {
        if self.recovery_until_round.is_none() {
            self.prior_cwnd = self.cwnd;
        }
        self.recovery_until_round = Some(self.round_count + 1);
        self.cwnd = match cause {
            CongestionCause::Rto => self.mss,
            _ => bytes_in_flight.max(self.min_cwnd()),
        };
    }

    fn on_ecn(&mut self, newly_ce: u64, _newly_acked: u64, now: SimTime) -> EcnReaction {
        if newly_ce > 0 && self.mode == BbrMode::ProbeBw && self.ce_round != Some(self.round_count) {
            self.ce_round = Some(self.round_count);
            if self.cycle_index != 1 {
                self.cycle_index = 1;
                self.cycle_stamp = now;
                self.pacing_gain = PROBE_BW_GAINS[1];
            }
        }
        EcnReaction::Handled
    }

    fn cwnd(&self) -> u64 {
        self.cwnd.max(self.mss)
    }

    fn ssthresh(&self) -> u64 {
        u64::MAX
    }

    fn in_slow_start(&self) -> bool {
        self.mode == BbrMode::Startup
    }

    fn pacing_rate(&self) -> Option<f64> {
        if self.btl_bw > 0.0 {
            return Some(self.pacing_gain * self.btl_bw);
        }
        let srtt = self.srtt?.as_secs_f64();
        (srtt > 0.0).then(|| self.pacing_gain * self.cwnd as f64 * 8.0 / srtt)
    }

    fn phase(&self) -> &'static str {
        match self.mode {
            BbrMode::Startup => "startup",
            BbrMode::Drain => "drain",
            BbrMode::ProbeBw => "probe_bw",
            BbrMode::ProbeRtt => "probe_rtt",
        }
    }

    fn snapshot(&self) -> CcSnapshot {
        CcSnapshot {
            cwnd: self.cwnd(),
            ssthresh: self.ssthresh(),
            phase: self.phase(),
            btl_bw_bps: Some(self.btl_bw),
            rt_prop: self.rt_prop,
            ecn_alpha: None,
        }
    }
}
