use super::reno::Reno;
use super::{AckSample, CcSnapshot, CongestionCause, CongestionControl, EcnReaction};
use crate::sim::SimTime;

pub const DCTCP_G: f64 = 1.0 / 16.0;

/// Reno growth with a reduction proportional to the fraction of CE-marked packets.
#[derive(Clone, Debug)]
pub struct Dctcp {
    reno: Reno,
    alpha: f64,
    window_end: u64,
    acked_in_window: u64,
    ce_in_window: u64,
}

impl Dctcp {
    pub fn new(mss: u32) -> Self {
        Dctcp {
            reno: Reno::new(mss),
            alpha: 1.0,
            window_end: 0,
            acked_in_window: 0,
            ce_in_window: 0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Closes an observation window: folds the marked fraction into alpha and,
    /// if anything was marked, cuts cwnd by `alpha / 2`.
    pub fn end_window(&mut self) {
        if self.acked_in_window == 0 {
            return;
        }
        let f = self.ce_in_window as f64 / self.acked_in_window as f64;
        self.alpha = (1.0 - DCTCP_G) * self.alpha + DCTCP_G * f;
        if self.ce_in_window > 0 {
            let cwnd = (self.reno.cwnd() as f64 * (1.0 - self.alpha / 2.0)).round() as u64;
            self.reno.set_cwnd(cwnd);
            self.reno.set_ssthresh(self.reno.cwnd());
        }
        self.acked_in_window = 0;
        self.ce_in_window = 0;
    }
}

impl CongestionControl for Dctcp {
    fn on_ack(&mut self, ack: &AckSample) {
        if ack.cwnd_limited {
            self.reno.grow(ack.acked_bytes);
        }
        if ack.largest_acked >= self.window_end {
            self.end_window();
            self.window_end = ack.next_pkt_num;
        }
    }

    fn on_congestion(&mut self, now: SimTime, cause: CongestionCause, bytes_in_flight: u64) {
        self.reno.on_congestion(now, cause, bytes_in_flight);
    }

    fn on_ecn(&mut self, newly_ce: u64, newly_acked: u64, _now: SimTime) -> EcnReaction {
        self.ce_in_window += newly_ce;
        self.acked_in_window += newly_acked;
        EcnReaction::Handled
    }

    fn cwnd(&self) -> u64 {
        self.reno.cwnd()
    }

    fn ssthresh(&self) -> u64 {
        self.reno.ssthresh()
    }

    fn snapshot(&self) -> CcSnapshot {
        CcSnapshot {
            cwnd: self.cwnd(),
            ssthresh: self.ssthresh(),
            phase: self.phase(),
            ecn_alpha: Some(self.alpha),
            ..CcSnapshot::default()
        }
    }
}
