//! QUIC-flavoured reliable transport: per-packet ACKs, packet-threshold and
//! RTO loss detection, ECN feedback and pluggable congestion control.

pub mod bbr;
pub mod cubic;
pub mod dctcp;
pub mod log;
pub mod receiver;
pub mod reno;
pub mod rtt;
pub mod sender;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{summarize, DistSummary};
use crate::sim::SimTime;

pub use bbr::{BbrLite, BbrMode};
pub use cubic::{cubic_k, cubic_window, Cubic, CUBIC_BETA, CUBIC_C};
pub use dctcp::Dctcp;
pub use log::{LogLevel, TransportEvent, TransportEventKind};
pub use receiver::{Delivered, ReceiveOutcome, Receiver};
pub use reno::Reno;
pub use rtt::RttEstimator;
pub use sender::{LossDetection, SendPoll, Sender, SenderConfig, SenderStats};

pub const DEFAULT_MSS: u32 = 1200;
pub const INITIAL_WINDOW_PACKETS: u64 = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("ack for packet {pkt_num} which was never sent (next is {next})")]
    AckForUnsent { pkt_num: u64, next: u64 },
    #[error("ECN echo reports {ce} CE packets out of {acked} acked")]
    CeExceedsAcked { ce: u64, acked: u64 },
    #[error("no samples")]
    Empty,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CcAlgo {
    Reno,
    #[default]
    Cubic,
    #[serde(rename = "bbr")]
    BbrLite,
    #[serde(rename = "dctcp")]
    DctcpEcn,
}

impl CcAlgo {
    pub fn name(self) -> &'static str {
        match self {
            CcAlgo::Reno => "reno",
            CcAlgo::Cubic => "cubic",
            CcAlgo::BbrLite => "bbr",
            CcAlgo::DctcpEcn => "dctcp",
        }
    }
}

/// What the receiver echoes for every data packet.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AckRecord {
    /// Next in-order sequence number expected by the receiver.
    pub cumulative_ack: u64,
    pub pkt_num: u64,
    pub seq: u64,
    /// Running total of CE-marked packets seen by the receiver.
    pub ecn_ce_count: u64,
    pub recv_time: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateSample {
    pub delivery_rate_bps: f64,
    /// Connection `delivered` counter when the acked packet was sent.
    pub prior_delivered: u64,
    pub is_app_limited: bool,
}

/// Everything a controller sees for one newly acknowledged packet.
#[derive(Clone, Copy, Debug)]
pub struct AckSample {
    pub now: SimTime,
    pub acked_bytes: u64,
    pub rtt: SimTime,
    pub min_rtt: SimTime,
    pub srtt: SimTime,
    /// After removing the acked packet.
    pub bytes_in_flight: u64,
    pub delivered: u64,
    pub rate: Option<RateSample>,
    pub largest_acked: u64,
    pub next_pkt_num: u64,
    /// False while the application, not the window, limits sending; windows should not grow.
    pub cwnd_limited: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CongestionCause {
    Loss,
    Ecn,
    Rto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EcnReaction {
    /// The controller consumed the echo itself.
    Handled,
    /// Treat as one loss-equivalent congestion event, without retransmission.
    AsCongestion,
}

/// Controller state exposed for timelines.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct CcSnapshot {
    pub cwnd: u64,
    pub ssthresh: u64,
    pub phase: &'static str,
    pub btl_bw_bps: Option<f64>,
    pub rt_prop: Option<SimTime>,
    pub ecn_alpha: Option<f64>,
}

pub trait CongestionControl: Send {
    fn on_ack(&mut self, ack: &AckSample);
    fn on_congestion(&mut self, now: SimTime, cause: CongestionCause, bytes_in_flight: u64);
    fn on_ecn(&mut self, newly_ce: u64, newly_acked: u64, now: SimTime) -> EcnReaction {
        let _ = (newly_ce, newly_acked, now);
        EcnReaction::AsCongestion
    }
    fn cwnd(&self) -> u64;
    fn ssthresh(&self) -> u64;
    fn in_slow_start(&self) -> bool {
        self.cwnd() < self.ssthresh()
    }
    /// Model-based pacing rate in bits/s; `None` lets the sender derive one from cwnd/srtt.
    fn pacing_rate(&self) -> Option<f64> {
        None
    }
    fn phase(&self) -> &'static str {
        if self.in_slow_start() {
            "slow_start"
        } else {
            "congestion_avoidance"
        }
    }
    fn snapshot(&self) -> CcSnapshot {
        CcSnapshot {
            cwnd: self.cwnd(),
            ssthresh: self.ssthresh(),
            phase: self.phase(),
            ..CcSnapshot::default()
        }
    }
}

pub fn new_controller(algo: CcAlgo, mss: u32, hystart: bool, seed: u64, flow: u64) -> Box<dyn CongestionControl> {
    match algo {
        CcAlgo::Reno => Box::new(Reno::new(mss)),
        CcAlgo::Cubic => Box::new(Cubic::new(mss, hystart)),
        CcAlgo::BbrLite => Box::new(BbrLite::new(mss, seed, flow)),
        CcAlgo::DctcpEcn => Box::new(Dctcp::new(mss)),
    }
}

/// One sequence number's successful round trip, measured from its first transmission.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrttSample {
    pub seq: u64,
    pub first_sent_at: SimTime,
    pub first_acked_at: SimTime,
}

impl SrttSample {
    pub fn value(&self) -> SimTime {
        self.first_acked_at - self.first_sent_at
    }
}

/// Distribution of sRTT values in microseconds.
pub fn srtt_metric(samples: &[SrttSample]) -> Result<DistSummary, TransportError> {
    let mut us: Vec<f64> = samples.iter().map(|s| s.value().as_nanos() as f64 / 1e3).collect();
    summarize(&mut us).ok_or(TransportError::Empty)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn srtt_metric_uses_original_send() {
        let s = [
            SrttSample {
                seq: 0,
                first_sent_at: SimTime::ZERO,
                first_acked_at: SimTime::from_millis(8),
            },
            SrttSample {
                seq: 1,
                first_sent_at: SimTime::from_millis(1),
                first_acked_at: SimTime::from_millis(29),
            },
        ];
        let d = srtt_metric(&s).unwrap();
        assert_eq!(d.mean, 18_000.0);
        assert_eq!(d.max, 28_000.0);
        assert_eq!(srtt_metric(&[]), Err(TransportError::Empty));
    }
}
