//! Random Early Detection and its adaptive variant. Thresholds and the
//! average are in bytes; `count` is in packets.

use serde::{Deserialize, Serialize};

use crate::sim::{RandomStream, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RedConfig {
    pub min_th: f64,
    pub max_th: f64,
    pub p_max: f64,
    pub w_q: f64,
}

impl RedConfig {
    pub fn validate(&self, capacity: u64) -> Result<(), String> {
        if !(0.0 <= self.min_th && self.min_th < self.max_th && self.max_th <= capacity as f64) {
            return Err(format!(
                "RED thresholds need 0 <= min_th < max_th <= capacity ({} / {} / {})",
                self.min_th, self.max_th, capacity
            ));
        }
        if !(self.p_max > 0.0 && self.p_max <= 1.0) {
            return Err(format!("RED p_max {} outside (0,1]", self.p_max));
        }
        if !(self.w_q > 0.0 && self.w_q <= 1.0) {
            return Err(format!("RED w_q {} outside (0,1]", self.w_q));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RedState {
    pub avg: f64,
    pub count: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RedDecision {
    Accept,
    Act,
}

/// EWMA of the instantaneous queue length.
pub fn update_avg(oldavg: f64, current_queue_len: f64, w_q: f64) -> f64 {
    (1.0 - w_q) * oldavg + w_q * current_queue_len
}

/// Probability of acting on the arriving packet given the current average and count.
pub fn red_act_probability(avg: f64, count: u64, cfg: &RedConfig) -> f64 {
    if avg < cfg.min_th {
        return 0.0;
    }
    if avg >= cfg.max_th {
        return 1.0;
    }
    let p_b = cfg.p_max * (avg - cfg.min_th) / (cfg.max_th - cfg.min_th);
    let denom = 1.0 - count as f64 * p_b;
    if denom <= 0.0 {
        return 1.0;
    }
    (p_b / denom).min(1.0)
}

/// Decides the fate of one arrival; `state.avg` must already include this arrival.
pub fn red_decision(state: &mut RedState, cfg: &RedConfig, stream: &mut RandomStream) -> RedDecision {
    if state.avg < cfg.min_th {
        state.count = 0;
        return RedDecision::Accept;
    }
    let p = red_act_probability(state.avg, state.count, cfg);
    if stream.bernoulli(p) {
        state.count = 0;
        RedDecision::Act
    } else {
        state.count += 1;
        RedDecision::Accept
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AredConfig {
    /// `red.p_max` is the starting value of the adapted maximum probability.
    pub red: RedConfig,
    pub interval: SimTime,
    pub target_low: f64,
    pub target_high: f64,
    /// Fixed additive step; `None` uses `min(0.01, max_p / 4)`.
    pub alpha_inc: Option<f64>,
    pub beta_dec: f64,
}

pub const ARED_MAX_P_CEIL: f64 = 0.5;
pub const ARED_MAX_P_FLOOR: f64 = 0.01;

impl AredConfig {
    /// Targets at 40% and 60% of the way from `min_th` to `max_th`.
    pub fn with_default_targets(red: RedConfig) -> Self {
        let span = red.max_th - red.min_th;
        AredConfig {
            red,
            interval: SimTime::from_millis(500),
            target_low: red.min_th + 0.4 * span,
            target_high: red.min_th + 0.6 * span,
            alpha_inc: None,
            beta_dec: 0.9,
        }
    }

    pub fn validate(&self, capacity: u64) -> Result<(), String> {
        self.red.validate(capacity)?;
        if !(self.red.min_th < self.target_low
            && self.target_low < self.target_high
            && self.target_high < self.red.max_th)
        {
            return Err("ARED targets must satisfy min_th < target_low < target_high < max_th".into());
        }
        if !(self.beta_dec > 0.0 && self.beta_dec < 1.0) {
            return Err(format!("ARED beta_dec {} outside (0,1)", self.beta_dec));
        }
        if self.interval == SimTime::ZERO {
            return Err("ARED interval must be positive".into());
        }
        Ok(())
    }
}

/// One adaptation step, run every `cfg.interval`.
pub fn ared_adapt(avg: f64, max_p: f64, cfg: &AredConfig) -> f64 {
    if avg > cfg.target_high && max_p < ARED_MAX_P_CEIL {
        let alpha = cfg.alpha_inc.unwrap_or_else(|| (max_p / 4.0).min(0.01));
        (max_p + alpha).min(ARED_MAX_P_CEIL)
    } else if avg < cfg.target_low && max_p > ARED_MAX_P_FLOOR {
        (max_p * cfg.beta_dec).max(ARED_MAX_P_FLOOR)
    } else {
        max_p
    }
}
