//! Downlink bottleneck model: a step-function trace of capacity, base one-way
//! delay and per-attempt MAC loss, plus HARQ-style retransmission delay.

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{RandomStream, SimTime};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("trace line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("trace is empty")]
    Empty,
    #[error("invalid channel parameters: {0}")]
    Config(String),
    #[error("trace i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: SimTime,
    pub capacity_bps: u64,
    pub base_owd_us: u64,
    pub mac_loss_prob: f64,
    pub max_harq_retx: u32,
    pub harq_retx_delay_us: u64,
}

impl TraceSample {
    pub fn base_owd(&self) -> SimTime {
        SimTime::from_micros(self.base_owd_us)
    }
}

/// Right-continuous step function over [`TraceSample`]s; the first sample is at t = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelTrace {
    samples: Vec<TraceSample>,
}

impl ChannelTrace {
    pub fn new(samples: Vec<TraceSample>) -> Result<Self, ChannelError> {
        if samples.is_empty() {
            return Err(ChannelError::Empty);
        }
        if samples[0].t != SimTime::ZERO {
            return Err(ChannelError::Config("first sample must be at t = 0".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if !(0.0..=1.0).contains(&s.mac_loss_prob) {
                return Err(ChannelError::Config(format!(
                    "sample {i}: mac_loss_prob {} outside [0,1]",
                    s.mac_loss_prob
                )));
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(ChannelError::Config(format!(
                    "sample {i}: timestamps must strictly increase"
                )));
            }
        }
        Ok(ChannelTrace { samples })
    }

    pub fn constant(capacity_bps: u64, base_owd_us: u64) -> Self {
        ChannelTrace {
            samples: vec![TraceSample {
                t: SimTime::ZERO,
                capacity_bps,
                base_owd_us,
                mac_loss_prob: 0.0,
                max_harq_retx: DEFAULT_MAX_HARQ_RETX,
                harq_retx_delay_us: DEFAULT_HARQ_RETX_DELAY_US,
            }],
        }
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    fn index_at(&self, t: SimTime) -> usize {
        // Latest sample with sample.t <= t.
        self.samples.partition_point(|s| s.t <= t).saturating_sub(1)
    }

    pub fn at(&self, t: SimTime) -> &TraceSample {
        &self.samples[self.index_at(t)]
    }

    /// Time of the first sample strictly after `t`.
    pub fn next_change_after(&self, t: SimTime) -> Option<SimTime> {
        self.samples.get(self.index_at(t) + 1).map(|s| s.t)
    }

    /// Earliest instant ≥ `t` at which capacity is positive.
    pub fn next_positive_capacity(&self, t: SimTime) -> Option<SimTime> {
        let i = self.index_at(t);
        if self.samples[i].capacity_bps > 0 {
            return Some(t);
        }
        self.samples[i + 1..]
            .iter()
            .find(|s| s.capacity_bps > 0)
            .map(|s| s.t)
    }

    /// Integral of capacity over `[from, to)` in bits.
    pub fn capacity_integral_bits(&self, from: SimTime, to: SimTime) -> f64 {
        if to <= from {
            return 0.0;
        }
        let mut bits = 0.0;
        let mut i = self.index_at(from);
        let mut cursor = from;
        while cursor < to {
            let seg_end = self.samples.get(i + 1).map_or(to, |s| s.t.min(to));
            bits += self.samples[i].capacity_bps as f64 * (seg_end - cursor).as_secs_f64();
            cursor = seg_end;
            i += 1;
        }
        bits
    }

    /// Time-weighted mean capacity over `[0, horizon)`.
    pub fn mean_capacity_bps(&self, horizon: SimTime) -> f64 {
        self.capacity_integral_bits(SimTime::ZERO, horizon) / horizon.as_secs_f64()
    }

    pub fn min_capacity_bps(&self) -> u64 {
        self.samples.iter().map(|s| s.capacity_bps).min().unwrap_or(0)
    }
}

pub const DEFAULT_MAX_HARQ_RETX: u32 = 3;
pub const DEFAULT_HARQ_RETX_DELAY_US: u64 = 1_000;

/// Parses `t_us,capacity_bps,base_owd_us,mac_loss_prob,max_harq_retx,harq_retx_delay_us`,
/// one row per sample, with an optional header row.
pub fn load_trace<R: Read>(source: R) -> Result<ChannelTrace, ChannelError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(source);
    let mut samples: Vec<TraceSample> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ChannelError::Parse {
            line: e.position().map_or(idx as u64 + 1, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(idx as u64 + 1, |p| p.line());
        if idx == 0 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        let err = |msg: String| ChannelError::Parse { line, msg };
        if record.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", record.len())));
        }
        let int = |i: usize, name: &str| -> Result<u64, ChannelError> {
            let raw = &record[i];
            if raw.starts_with('-') {
                return Err(err(format!("{name} must be non-negative, got {raw}")));
            }
            raw.parse::<u64>()
                .map_err(|e| err(format!("{name}: {e} ({raw:?})")))
        };
        let t = SimTime::from_micros(int(0, "t_us")?);
        let capacity_bps = int(1, "capacity_bps")?;
        let base_owd_us = int(2, "base_owd_us")?;
        let mac_loss_prob: f64 = record[3]
            .parse()
            .map_err(|e| err(format!("mac_loss_prob: {e}")))?;
        if !(0.0..=1.0).contains(&mac_loss_prob) {
            return Err(err(format!("mac_loss_prob {mac_loss_prob} outside [0,1]")));
        }
        let max_harq_retx = int(4, "max_harq_retx")? as u32;
        let harq_retx_delay_us = int(5, "harq_retx_delay_us")?;
        if let Some(prev) = samples.last() {
            if t <= prev.t {
                return Err(err("timestamps must strictly increase".into()));
            }
        } else if t != SimTime::ZERO {
            return Err(err("first sample must be at t = 0".into()));
        }
        samples.push(TraceSample {
            t,
            capacity_bps,
            base_owd_us,
            mac_loss_prob,
            max_harq_retx,
            harq_retx_delay_us,
        });
    }
    ChannelTrace::new(samples)
}

/// Writes a trace in the same CSV format accepted by [`load_trace`].
pub fn write_trace<W: std::io::Write>(trace: &ChannelTrace, mut out: W) -> std::io::Result<()> {
    writeln!(out, "t_us,capacity_bps,base_owd_us,mac_loss_prob,max_harq_retx,harq_retx_delay_us")?;
    for s in trace.samples() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.t.as_micros(),
            s.capacity_bps,
            s.base_owd_us,
            s.mac_loss_prob,
            s.max_harq_retx,
            s.harq_retx_delay_us
        )?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LosNlosParams {
    pub los_capacity_bps: u64,
    pub nlos_capacity_bps: u64,
    pub los_duration_s: f64,
    pub nlos_duration_s: f64,
    pub los_loss_prob: f64,
    pub nlos_loss_prob: f64,
    pub base_owd_us: u64,
    pub total_duration_s: f64,
    pub max_harq_retx: u32,
    pub harq_retx_delay_us: u64,
}

/// Alternating LoS/NLoS step trace starting in LoS.
pub fn synth_los_nlos(p: &LosNlosParams) -> Result<ChannelTrace, ChannelError> {
    if !(p.los_duration_s > 0.0 && p.nlos_duration_s > 0.0 && p.total_duration_s > 0.0) {
        return Err(ChannelError::Config("durations must be positive".into()));
    }
    if p.nlos_capacity_bps > p.los_capacity_bps {
        return Err(ChannelError::Config(
            "nlos_capacity_bps must not exceed los_capacity_bps".into(),
        ));
    }
    for prob in [p.los_loss_prob, p.nlos_loss_prob] {
        if !(0.0..=1.0).contains(&prob) {
            return Err(ChannelError::Config(format!("loss probability {prob} outside [0,1]")));
        }
    }
    let mut samples = Vec::new();
    let mut t = 0.0;
    let mut los = true;
    while t < p.total_duration_s {
        let (capacity_bps, mac_loss_prob, dur) = if los {
            (p.los_capacity_bps, p.los_loss_prob, p.los_duration_s)
        } else {
            (p.nlos_capacity_bps, p.nlos_loss_prob, p.nlos_duration_s)
        };
        samples.push(TraceSample {
            t: SimTime::from_secs_f64(t),
            capacity_bps,
            base_owd_us: p.base_owd_us,
            mac_loss_prob,
            max_harq_retx: p.max_harq_retx,
            harq_retx_delay_us: p.harq_retx_delay_us,
        });
        t += dur;
        los = !los;
    }
    ChannelTrace::new(samples)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeliveryOutcome {
    Delivered { at: SimTime },
    Lost,
}

/// Result of handing one packet to the radio link.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transmission {
    /// When the link can start serializing the next packet.
    pub link_free_at: SimTime,
    pub outcome: DeliveryOutcome,
    pub attempts: u32,
}

/// Serialization time of `size_bytes` at `capacity_bps`, rounded up to whole nanoseconds.
pub fn serialization_time(size_bytes: u32, capacity_bps: u64) -> SimTime {
    let bits = size_bytes as u128 * 8 * 1_000_000_000;
    SimTime::from_nanos(bits.div_ceil(capacity_bps as u128) as u64)
}

/// Sends one packet at `now`. Returns `None` if the link never regains capacity.
pub fn transmit(
    size_bytes: u32,
    now: SimTime,
    trace: &ChannelTrace,
    stream: &mut RandomStream,
) -> Option<Transmission> {
    debug_assert!(size_bytes > 0);
    let start = trace.next_positive_capacity(now)?;
    let sample = trace.at(start);
    let ser = serialization_time(size_bytes, sample.capacity_bps);
    let link_free_at = start + ser;
    let mut failures = 0u32;
    let max_attempts = sample.max_harq_retx + 1;
    let mut attempts = 0;
    let mut delivered = false;
    while attempts < max_attempts {
        attempts += 1;
        if stream.bernoulli(sample.mac_loss_prob) {
            failures += 1;
        } else {
            delivered = true;
            break;
        }
    }
    let outcome = if delivered {
        let harq = SimTime::from_micros(sample.harq_retx_delay_us).mul_u64(failures as u64);
        DeliveryOutcome::Delivered {
            at: link_free_at + sample.base_owd() + harq,
        }
    } else {
        DeliveryOutcome::Lost
    };
    Some(Transmission {
        link_free_at,
        outcome,
        attempts,
    })
}
