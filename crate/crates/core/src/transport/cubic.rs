use super::{AckSample, CongestionCause, CongestionControl, INITIAL_WINDOW_PACKETS};
use crate::sim::SimTime;

/// Cubic scaling constant in segments/s^3.
pub const CUBIC_C: f64 = 0.4;
/// Multiplicative decrease factor.
pub const CUBIC_BETA: f64 = 0.7;

/// Time in seconds for the window to climb back to `w_max` after a reduction.
pub fn cubic_k(w_max: f64, mss: u32) -> f64 {
    (w_max * (1.0 - CUBIC_BETA) / (CUBIC_C * mss as f64)).cbrt()
}

/// `C (t - K)^3 + W_max` in bytes, floored at one MSS. `t` is seconds since
/// the last congestion event. The curve does not depend on the RTT.
pub fn cubic_window(t: f64, w_max: f64, mss: u32) -> f64 {
    let k = cubic_k(w_max, mss);
    let w = CUBIC_C * mss as f64 * (t - k).powi(3) + w_max;
    w.max(mss as f64)
}

#[derive(Clone, Debug, Default)]
struct HyStart {
    round_end: u64,
    last_round_min: Option<SimTime>,
    cur_round_min: Option<SimTime>,
    samples: u32,
}

const HYSTART_MIN_SAMPLES: u32 = 8;

#[derive(Clone, Debug)]
pub struct Cubic {
    mss: u64,
    cwnd: f64,
    ssthresh: u64,
    w_max: f64,
    epoch_start: Option<SimTime>,
    k: f64,
    origin: f64,
    w_est: f64,
    hystart: Option<HyStart>,
}

impl Cubic {
    pub fn new(mss: u32, hystart: bool) -> Self {
        Cubic {
            mss: mss as u64,
            cwnd: (INITIAL_WINDOW_PACKETS * mss as u64) as f64,
            ssthresh: u64::MAX,
            w_max: 0.0,
            epoch_start: None,
            k: 0.0,
            origin: 0.0,
            w_est: 0.0,
            hystart: hystart.then(HyStart::default),
        }
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    pub fn set_cwnd(&mut self, cwnd: u64) {
        self.cwnd = cwnd as f64;
    }

    fn hystart_check(&mut self, ack: &AckSample) {
        let Some(h) = self.hystart.as_mut() else {
            return;
        };
        if ack.largest_acked >= h.round_end {
            h.round_end = ack.next_pkt_num;
            h.last_round_min = h.cur_round_min.take();
            h.samples = 0;
        }
        h.cur_round_min = Some(h.cur_round_min.map_or(ack.rtt, |m| m.min(ack.rtt)));
        h.samples += 1;
        if let (Some(last), Some(cur)) = (h.last_round_min, h.cur_round_min) {
            let thresh = last + SimTime::from_nanos(last.as_nanos() / 8);
            if h.samples >= HYSTART_MIN_SAMPLES && cur > thresh {
                self.ssthresh = self.cwnd as u64;
            }
        }
    }

    fn reduce(&mut self, cause: CongestionCause) {
        self.epoch_start = None;
        self.w_max = if self.cwnd < self.w_max {
            self.cwnd * (1.0 + CUBIC_BETA) / 2.0
        } else {
            self.cwnd
        };
        let reduced = (self.cwnd * CUBIC_BETA).max(2.0 * self.mss as f64);
        self.ssthresh = reduced as u64;
        self.cwnd = match cause {
            CongestionCause::Rto => self.mss as f64,
            _ => reduced,
        };
    }
}

impl CongestionControl for Cubic {
    fn on_ack(&mut self, ack: &AckSample) {
        let acked = ack.acked_bytes as f64;
        if !ack.cwnd_limited {
            // Restart the cubic epoch once the window is in use again.
            self.epoch_start = None;
            return;
        }
        if (self.cwnd as u64) < self.ssthresh {
            self.cwnd += acked;
            self.hystart_check(ack);
            return;
        }
        let mss = self.mss as f64;
        let epoch = *self.epoch_start.get_or_insert_with(|| {
            if self.cwnd < self.w_max {
                self.k = ((self.w_max - self.cwnd) / (CUBIC_C * mss)).cbrt();
                self.origin = self.w_max;
            } else {
                self.k = 0.0;
                self.origin = self.cwnd;
            }
            self.w_est = self.cwnd;
            ack.now
        });
        let t = (ack.now - epoch + ack.min_rtt).as_secs_f64();
        let target = self.origin + CUBIC_C * mss * (t - self.k).powi(3);
        if target > self.cwnd {
            self.cwnd += (target - self.cwnd) * acked / self.cwnd;
        } else {
            self.cwnd += 0.01 * mss * acked / self.cwnd;
        }
        // Reno-friendly region.
        let alpha = 3.0 * (1.0 - CUBIC_BETA) / (1.0 + CUBIC_BETA);
        self.w_est += alpha * mss * acked / self.cwnd;
        self.cwnd = self.cwnd.max(self.w_est);
    }

    fn on_congestion(&mut self, _now: SimTime, cause: CongestionCause, _bytes_in_flight: u64) {
        self.reduce(cause);
    }

    fn cwnd(&self) -> u64 {
        (self.cwnd as u64).max(self.mss)
    }

    fn ssthresh(&self) -> u64 {
        self.ssthresh
    }
}
