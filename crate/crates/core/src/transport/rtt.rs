use crate::sim::SimTime;

pub const DEFAULT_RTO_MIN: SimTime = SimTime::from_millis(20);
pub const DEFAULT_INITIAL_RTO: SimTime = SimTime::from_secs(1);
pub const MAX_RTO: SimTime = SimTime::from_secs(60);

/// Smoothed RTT and retransmission timeout with exponential backoff.
#[derive(Clone, Debug)]
pub struct RttEstimator {
    srtt: Option<SimTime>,
    rttvar: SimTime,
    min_rtt: Option<SimTime>,
    latest: Option<SimTime>,
    rto_min: SimTime,
    initial_rto: SimTime,
    backoff: u32,
}

impl RttEstimator {
    pub fn new(rto_min: SimTime, initial_rto: SimTime) -> Self {
        RttEstimator {
            srtt: None,
            rttvar: SimTime::ZERO,
            min_rtt: None,
            latest: None,
            rto_min,
            initial_rto,
            backoff: 0,
        }
    }

    pub fn on_sample(&mut self, rtt: SimTime) {
        self.latest = Some(rtt);
        self.min_rtt = Some(self.min_rtt.map_or(rtt, |m| m.min(rtt)));
        match self.srtt {
            None => {
                self.srtt = Some(rtt);
                self.rttvar = SimTime::from_nanos(rtt.as_nanos() / 2);
            }
            Some(srtt) => {
                let dev = srtt.as_nanos().abs_diff(rtt.as_nanos());
                self.rttvar = SimTime::from_nanos((3 * self.rttvar.as_nanos() + dev) / 4);
                self.srtt = Some(SimTime::from_nanos((7 * srtt.as_nanos() + rtt.as_nanos()) / 8));
            }
        }
    }

    pub fn srtt(&self) -> Option<SimTime> {
        self.srtt
    }

    pub fn rttvar(&self) -> SimTime {
        self.rttvar
    }

    pub fn min_rtt(&self) -> Option<SimTime> {
        self.min_rtt
    }

    pub fn latest(&self) -> Option<SimTime> {
        self.latest
    }

    pub fn backoff(&self) -> u32 {
        self.backoff
    }

    /// RTO before backoff.
    pub fn base_rto(&self) -> SimTime {
        match self.srtt {
            Some(s) => (s + self.rttvar.mul_u64(4)).max(self.rto_min),
            None => self.initial_rto.max(self.rto_min),
        }
    }

    pub fn rto(&self) -> SimTime {
        let shift = self.backoff.min(32);
        SimTime::from_nanos(self.base_rto().as_nanos().saturating_mul(1u64 << shift)).min(MAX_RTO)
    }

    pub fn rto_timer(&self, now: SimTime) -> SimTime {
        now + self.rto()
    }

    pub fn on_timeout(&mut self) {
        self.backoff = self.backoff.saturating_add(1);
    }

    pub fn reset_backoff(&mut self) {
        self.backoff = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est() -> RttEstimator {
        RttEstimator::new(DEFAULT_RTO_MIN, DEFAULT_INITIAL_RTO)
    }

    #[test]
    fn rto_floor_applies() {
        let mut e = est();
        e.srtt = Some(SimTime::from_millis(8));
        e.rttvar = SimTime::from_millis(2);
        assert_eq!(e.rto_timer(SimTime::from_secs(1)), SimTime::from_millis(1020));
    }

    #[test]
    fn backoff_doubles_then_resets() {
        let mut e = est();
        e.on_sample(SimTime::from_millis(4));
        let mut seen = vec![];
        for _ in 0..3 {
            seen.push(e.rto().as_nanos() / 1_000_000);
            e.on_timeout();
        }
        assert_eq!(seen, vec![20, 40, 80]);
        e.reset_backoff();
        assert_eq!(e.rto(), SimTime::from_millis(20));
    }

    #[test]
    fn smoothing_gains() {
        let mut e = est();
        e.on_sample(SimTime::from_millis(100));
        assert_eq!(e.rttvar(), SimTime::from_millis(50));
        e.on_sample(SimTime::from_millis(200));
        assert_eq!(e.srtt(), Some(SimTime::from_nanos(112_500_000)));
        assert_eq!(e.rttvar(), SimTime::from_nanos(62_500_000));
        assert_eq!(e.min_rtt(), Some(SimTime::from_millis(100)));
    }

    #[test]
    fn initial_rto_without_samples() {
        assert_eq!(est().rto(), SimTime::from_secs(1));
    }
}
