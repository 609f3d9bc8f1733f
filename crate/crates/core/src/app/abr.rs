use serde::{Deserialize, Serialize};

use super::ladder::Ladder;
use crate::sim::SimTime;

pub const DEFAULT_SAFETY: f64 = 0.9;

/// Inputs to a bitrate decision.
#[derive(Clone, Copy, Debug)]
pub struct AbrContext<'a> {
    /// Per-segment throughput estimates in bits/s, oldest first.
    pub history_bps: &'a [f64],
    pub buffer: SimTime,
    pub segment_duration: SimTime,
    pub ladder: &'a Ladder,
    pub last_level: Option<usize>,
}

/// Pluggable bitrate selection.
pub trait AbrPolicy: Send {
    fn name(&self) -> &'static str;
    fn decide(&mut self, ctx: &AbrContext<'_>) -> usize;
}

/// Highest rung within `safety` times the mean of the last two estimates.
pub fn abr_con_decide(history_bps: &[f64], ladder: &Ladder, safety: f64) -> usize {
    let recent = &history_bps[history_bps.len().saturating_sub(2)..];
    if recent.is_empty() {
        return 0;
    }
    let budget = safety * recent.iter().sum::<f64>() / recent.len() as f64;
    ladder
        .levels()
        .iter()
        .rposition(|l| l.bitrate_bps as f64 <= budget)
        .unwrap_or(0)
}

/// Drops to the lowest rung below one segment of buffer, one rung below two.
pub fn stall_prevention(level: usize, buffer: SimTime, segment_duration: SimTime) -> usize {
    if buffer < segment_duration {
        0
    } else if buffer < segment_duration.mul_u64(2) {
        level.saturating_sub(1)
    } else {
        level
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Con {
    pub safety: f64,
}

impl AbrPolicy for Con {
    fn name(&self) -> &'static str {
        "con"
    }

    fn decide(&mut self, ctx: &AbrContext<'_>) -> usize {
        abr_con_decide(ctx.history_bps, ctx.ladder, self.safety)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConPlus {
    pub safety: f64,
}

impl AbrPolicy for ConPlus {
    fn name(&self) -> &'static str {
        "con_plus"
    }

    fn decide(&mut self, ctx: &AbrContext<'_>) -> usize {
        let l = abr_con_decide(ctx.history_bps, ctx.ladder, self.safety);
        stall_prevention(l, ctx.buffer, ctx.segment_duration)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Fixed(pub usize);

impl AbrPolicy for Fixed {
    fn name(&self) -> &'static str {
        "fixed"
    }

    fn decide(&mut self, ctx: &AbrContext<'_>) -> usize {
        self.0.min(ctx.ladder.top())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AbrKind {
    Con {
        #[serde(default = "default_safety")]
        safety: f64,
    },
    ConPlus {
        #[serde(default = "default_safety")]
        safety: f64,
    },
    Fixed {
        level: usize,
    },
}

fn default_safety() -> f64 {
    DEFAULT_SAFETY
}

impl Default for AbrKind {
    fn default() -> Self {
        AbrKind::ConPlus { safety: DEFAULT_SAFETY }
    }
}

impl AbrKind {
    pub fn build(self) -> Box<dyn AbrPolicy> {
        match self {
            AbrKind::Con { safety } => Box::new(Con { safety }),
            AbrKind::ConPlus { safety } => Box::new(ConPlus { safety }),
            AbrKind::Fixed { level } => Box::new(Fixed(level)),
        }
    }
}
