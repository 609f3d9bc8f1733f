use super::{AckSample, CongestionCause, CongestionControl, INITIAL_WINDOW_PACKETS};
use crate::sim::SimTime;

/// Classic AIMD: slow start, one MSS per cwnd of acked bytes, halve on loss.
#[derive(Clone, Debug)]
pub struct Reno {
    mss: u64,
    cwnd: u64,
    ssthresh: u64,
    acc: u64,
}

impl Reno {
    pub fn new(mss: u32) -> Self {
        Reno::with_window(mss, INITIAL_WINDOW_PACKETS * mss as u64)
    }

    pub fn with_window(mss: u32, cwnd: u64) -> Self {
        Reno {
            mss: mss as u64,
            cwnd: cwnd.max(mss as u64),
            ssthresh: u64::MAX,
            acc: 0,
        }
    }

    pub fn set_ssthresh(&mut self, ssthresh: u64) {
        self.ssthresh = ssthresh;
    }

    pub(crate) fn grow(&mut self, acked: u64) {
        if self.cwnd < self.ssthresh {
            self.cwnd += acked;
            return;
        }
        self.acc += acked;
        while self.acc >= self.cwnd {
            self.acc -= self.cwnd;
            self.cwnd += self.mss;
        }
    }

    pub(crate) fn set_cwnd(&mut self, cwnd: u64) {
        self.cwnd = cwnd.max(self.mss);
        self.acc = 0;
    }
}

impl CongestionControl for Reno {
    fn on_ack(&mut self, ack: &AckSample) {
        if ack.cwnd_limited {
            self.grow(ack.acked_bytes);
        }
    }

    fn on_congestion(&mut self, _now: SimTime, cause: CongestionCause, _bytes_in_flight: u64) {
        self.ssthresh = (self.cwnd / 2).max(2 * self.mss);
        self.acc = 0;
        self.cwnd = match cause {
            CongestionCause::Rto => self.mss,
            _ => self.ssthresh,
        };
    }

    fn cwnd(&self) -> u64 {
        self.cwnd
    }

    fn ssthresh(&self) -> u64 {
        self.ssthresh
    }
}
