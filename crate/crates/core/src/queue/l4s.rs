//! Delay-threshold marking: a linear ramp between two sojourn thresholds,
//! smoothed by an EWMA that updates at most once per period.

use serde::{Deserialize, Serialize};

use crate::sim::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct L4sConfig {
    pub low_th: SimTime,
    pub high_th: SimTime,
    pub alpha: f64,
    pub update_period: SimTime,
}

impl L4sConfig {
    pub fn new(low_th: SimTime, high_th: SimTime) -> Self {
        L4sConfig {
            low_th,
            high_th,
            alpha: 0.25,
            update_period: SimTime::from_millis(1),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.low_th > SimTime::ZERO && self.low_th < self.high_th) {
            return Err("L4S thresholds need 0 < low_th < high_th".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(format!("L4S alpha {} outside [0,1]", self.alpha));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct L4sState {
    pub p_mark: f64,
    pub last_update: Option<SimTime>,
}

/// Normalized position of `qdelay` on the ramp, clamped to [0, 1].
pub fn l4s_temp(qdelay: SimTime, cfg: &L4sConfig) -> f64 {
    if qdelay <= cfg.low_th {
        return 0.0;
    }
    if qdelay >= cfg.high_th {
        return 1.0;
    }
    (qdelay - cfg.low_th).as_nanos() as f64 / (cfg.high_th - cfg.low_th).as_nanos() as f64
}

/// Action probability for a packet leaving the queue with sojourn `qdelay`.
pub fn l4s_mark_probability(
    qdelay: SimTime,
    cfg: &L4sConfig,
    state: &mut L4sState,
    now: SimTime,
) -> f64 {
    let due = state
        .last_update
        .is_none_or(|t| now >= t.saturating_add(cfg.update_period));
    if due {
        let temp = l4s_temp(qdelay, cfg);
        state.p_mark = (cfg.alpha * temp + (1.0 - cfg.alpha) * state.p_mark).clamp(0.0, 1.0);
        state.last_update = Some(now);
    }
    if qdelay <= cfg.low_th {
        0.0
    } else if qdelay >= cfg.high_th {
        1.0
    } else {
        state.p_mark
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(alpha: f64) -> L4sConfig {
        L4sConfig {
            alpha,
            ..L4sConfig::new(SimTime::from_millis(10), SimTime::from_millis(25))
        }
    }

    #[test]
    fn boundaries() {
        let c = cfg(0.25);
        let mut s = L4sState::default();
        assert_eq!(l4s_temp(c.low_th, &c), 0.0);
        assert_eq!(l4s_mark_probability(c.low_th, &c, &mut s, SimTime::ZERO), 0.0);
        assert_eq!(l4s_temp(c.high_th, &c), 1.0);
        assert_eq!(
            l4s_mark_probability(c.high_th, &c, &mut s, SimTime::from_millis(2)),
            1.0
        );
    }

    #[test]
    fn memoryless_ramp_value() {
        let c = cfg(1.0);
        let mut s = L4sState::default();
        let q = SimTime::from_millis(10) + SimTime::from_micros(6_000);
        let p = l4s_mark_probability(q, &c, &mut s, SimTime::ZERO);
        assert!((p - 0.4).abs() < 1e-12);
    }

    #[test]
    fn updates_at_most_once_per_period() {
        let c = cfg(0.5);
        let mut s = L4sState::default();
        let q = SimTime::from_micros(17_500); // temp = 0.5
        let p1 = l4s_mark_probability(q, &c, &mut s, SimTime::ZERO);
        let p2 = l4s_mark_probability(q, &c, &mut s, SimTime::from_micros(500));
        let p3 = l4s_mark_probability(q, &c, &mut s, SimTime::from_millis(1));
        assert_eq!(p1, 0.25);
        assert_eq!(p2, 0.25);
        assert_eq!(p3, 0.375);
    }

    #[test]
    fn monotone_in_delay_when_memoryless() {
        let c = cfg(1.0);
        let mut last = 0.0;
        for us in (0..30_000).step_by(50) {
            let mut s = L4sState::default();
            let p = l4s_mark_probability(SimTime::from_micros(us), &c, &mut s, SimTime::ZERO);
            assert!(p >= last);
            last = p;
        }
    }
}
