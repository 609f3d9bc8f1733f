//! Metric extraction from run logs and the results file format.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app::{PlaybackLog, SegmentRecord};
use crate::queue::{QueueEvent, QueueEventKind};
use crate::sim::SimTime;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("session has no segments")]
    NoSegments,
    #[error("unknown export format `{0}` (expected csv or json)")]
    UnknownFormat(String),
    #[error("timestamps must be non-decreasing in series `{0}`")]
    Unordered(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistSummary {
    pub count: usize,
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub min: f64,
    pub max: f64,
}

/// Nearest-rank percentile of sorted data.
fn rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let idx = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

/// Sorts `values` in place; `None` when empty.
pub fn summarize(values: &mut [f64]) -> Option<DistSummary> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let sum: f64 = values.iter().sum();
    Some(DistSummary {
        count: values.len(),
        mean: sum / values.len() as f64,
        p50: rank(values, 0.50),
        p95: rank(values, 0.95),
        p99: rank(values, 0.99),
        min: values[0],
        max: values[values.len() - 1],
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub name: String,
    pub unit: String,
    pub samples: Vec<(SimTime, f64)>,
}

impl MetricSeries {
    pub fn new(name: &str, unit: &str) -> Self {
        MetricSeries {
            name: name.into(),
            unit: unit.into(),
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, t: SimTime, v: f64) -> Result<(), MetricsError> {
        if self.samples.last().is_some_and(|&(last, _)| t < last) {
            return Err(MetricsError::Unordered(self.name.clone()));
        }
        self.samples.push((t, v));
        Ok(())
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|&(_, v)| v)
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.samples.is_empty()).then(|| self.values().sum::<f64>() / self.samples.len() as f64)
    }
}

/// Byte counts per fixed window.
#[derive(Clone, Debug)]
pub struct RateBinner {
    window: SimTime,
    bins: Vec<u64>,
}

impl RateBinner {
    pub fn new(window: SimTime) -> Self {
        assert!(window > SimTime::ZERO);
        RateBinner { window, bins: Vec::new() }
    }

    pub fn add(&mut self, t: SimTime, bytes: u64) {
        let i = (t.as_nanos() / self.window.as_nanos()) as usize;
        if i >= self.bins.len() {
            self.bins.resize(i + 1, 0);
        }
        self.bins[i] += bytes;
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    /// Rate in bits/s per window, stamped at window start, covering `[0, until)`.
    pub fn series(&self, name: &str, until: SimTime) -> MetricSeries {
        let n = until.as_nanos().div_ceil(self.window.as_nanos()) as usize;
        let secs = self.window.as_secs_f64();
        let mut s = MetricSeries::new(name, "bit/s");
        for i in 0..n.max(self.bins.len()) {
            let bytes = self.bins.get(i).copied().unwrap_or(0);
            s.samples.push((self.window.mul_u64(i as u64), bytes as f64 * 8.0 / secs));
        }
        s
    }
}

/// Sent bytes (retransmissions included) and unique in-order delivered bytes per window.
pub fn throughput_and_goodput(
    tx_log: &[(SimTime, u32)],
    rx_log: &[(SimTime, u32)],
    window: SimTime,
    until: SimTime,
) -> (MetricSeries, MetricSeries) {
    let mut tx = RateBinner::new(window);
    let mut rx = RateBinner::new(window);
    for &(t, b) in tx_log {
        tx.add(t, b as u64);
    }
    for &(t, b) in rx_log {
        rx.add(t, b as u64);
    }
    (tx.series("throughput", until), rx.series("goodput", until))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Arrival {
    pub at: SimTime,
    pub sent_at: SimTime,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct JitterSeries {
    /// `|inter-arrival - period|`; empty without a nominal period.
    pub iat_deviation: MetricSeries,
    /// Smoothed transit-time variation with gain 1/16.
    pub rfc3550: MetricSeries,
}

/// Streaming form of [`jitter`].
#[derive(Clone, Debug, Default)]
pub struct JitterTracker {
    period: Option<SimTime>,
    last: Option<Arrival>,
    j: f64,
    iat_sum: f64,
    iat_n: u64,
    j_sum: f64,
    j_n: u64,
}

impl JitterTracker {
    pub fn new(period: Option<SimTime>) -> Self {
        JitterTracker {
            period,
            ..Default::default()
        }
    }

    /// Returns `(iat deviation, rfc3550 estimate)` in seconds for every arrival after the first.
    pub fn on_arrival(&mut self, a: Arrival) -> Option<(Option<f64>, f64)> {
        let prev = self.last.replace(a)?;
        let iat = a.at.as_nanos() as f64 - prev.at.as_nanos() as f64;
        let dev = self.period.map(|p| (iat - p.as_nanos() as f64).abs() / 1e9);
        if let Some(d) = dev {
            self.iat_sum += d;
            self.iat_n += 1;
        }
        let transit_diff = iat - (a.sent_at.as_nanos() as f64 - prev.sent_at.as_nanos() as f64);
        self.j += (transit_diff.abs() / 1e9 - self.j) / 16.0;
        self.j_sum += self.j;
        self.j_n += 1;
        Some((dev, self.j))
    }

    pub fn mean_iat_deviation(&self) -> Option<f64> {
        (self.iat_n > 0).then(|| self.iat_sum / self.iat_n as f64)
    }

    pub fn mean_rfc3550(&self) -> Option<f64> {
        (self.j_n > 0).then(|| self.j_sum / self.j_n as f64)
    }
}

pub fn jitter(arrivals: &[Arrival], period: Option<SimTime>) -> JitterSeries {
    let mut out = JitterSeries {
        iat_deviation: MetricSeries::new("jitter_iat", "s"),
        rfc3550: MetricSeries::new("jitter_rfc3550", "s"),
    };
    let mut tr = JitterTracker::new(period);
    for &a in arrivals {
        if let Some((dev, j)) = tr.on_arrival(a) {
            if let Some(d) = dev {
                out.iat_deviation.samples.push((a.at, d));
            }
            out.rfc3550.samples.push((a.at, j));
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct QueueStats {
    pub occupancy: MetricSeries,
    pub qdelay: MetricSeries,
    pub enqueued: u64,
    pub delivered: u64,
    pub dropped_aqm: u64,
    pub dropped_overflow: u64,
    pub marked: u64,
}

pub fn queue_stats(log: &[QueueEvent]) -> QueueStats {
    let mut s = QueueStats {
        occupancy: MetricSeries::new("occupancy", "B"),
        qdelay: MetricSeries::new("qdelay", "s"),
        ..QueueStats::default()
    };
    for e in log {
        s.occupancy.samples.push((e.t, e.occupancy as f64));
        match e.kind {
            QueueEventKind::Enqueue => s.enqueued += 1,
            QueueEventKind::Mark => s.marked += 1,
            QueueEventKind::DropAqm => {
                s.dropped_aqm += 1;
                // Arrival-side AQM drops never entered the buffer.
                if e.qdelay.is_none() {
                    s.enqueued += 1;
                }
            }
            QueueEventKind::DropOverflow => {
                s.dropped_overflow += 1;
                s.enqueued += 1;
            }
            QueueEventKind::Dequeue => {
                s.delivered += 1;
                if let Some(q) = e.qdelay {
                    s.qdelay.samples.push((e.t, q.as_secs_f64()));
                }
            }
        }
    }
    s
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionQoe {
    pub mean_vmaf: f64,
    pub rebuffer_duration_s: f64,
    pub rebuffer_count: u64,
    pub startup_delay_s: f64,
    pub mean_level: f64,
    pub level_switch_count: u64,
}

pub fn session_qoe(qoe_log: &[SegmentRecord], playback: &PlaybackLog) -> Result<SessionQoe, MetricsError> {
    if qoe_log.is_empty() {
        return Err(MetricsError::NoSegments);
    }
    let total: f64 = qoe_log.iter().map(|s| s.duration_s).sum();
    let mean_vmaf = qoe_log.iter().map(|s| s.vmaf * s.duration_s).sum::<f64>() / total;
    let mean_level = qoe_log.iter().map(|s| s.level as f64 * s.duration_s).sum::<f64>() / total;
    let switches = qoe_log.windows(2).filter(|w| w[0].level != w[1].level).count() as u64;
    Ok(SessionQoe {
        mean_vmaf,
        rebuffer_duration_s: playback.stalls.iter().map(|s| s.duration.as_secs_f64()).fold(0.0, |a, b| a + b),
        rebuffer_count: playback.stalls.len() as u64,
        startup_delay_s: playback.startup_delay.map_or(0.0, |t| t.as_secs_f64()),
        mean_level,
        level_switch_count: switches,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub config_hash: String,
    pub seed: u64,
    pub scenario: String,
    pub horizon_s: f64,
    pub events: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Drops {
    pub aqm: u64,
    pub overflow: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub id: u32,
    pub app: String,
    pub cc: String,
    pub aqm: String,
    pub mode: String,
    pub ecn: bool,
    pub throughput_bps: f64,
    pub goodput_bps: f64,
    pub srtt_us: Option<DistSummary>,
    pub jitter_us: Option<f64>,
    pub jitter_rfc3550_us: Option<f64>,
    pub qdelay_us: Option<DistSummary>,
    pub drops: Drops,
    pub marks: u64,
    pub enqueued: u64,
    pub delivered: u64,
    pub queued_at_end: u64,
    pub retransmissions: u64,
    pub rtos: u64,
    pub ce_echoed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub throughput_bps: f64,
    pub goodput_bps: f64,
    pub srtt_us: Option<DistSummary>,
    pub qdelay_us: Option<DistSummary>,
    pub drops: Drops,
    pub marks: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub flow: u32,
    #[serde(flatten)]
    pub qoe: SessionQoe,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub run: RunInfo,
    pub flows: Vec<FlowResult>,
    pub aggregate: AggregateResult,
    pub sessions: Vec<SessionResult>,
    /// Per-flow queue conservation held at every sampling instant.
    pub conservation_ok: bool,
}

impl RunResults {
    pub fn from_json(bytes: &[u8]) -> Result<Self, MetricsError> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(MetricsError::UnknownFormat(other.into())),
        }
    }
}

fn dist_cells(d: &Option<DistSummary>) -> [String; 4] {
    match d {
        Some(d) => [d.mean, d.p50, d.p95, d.p99].map(|v| v.to_string()),
        None => Default::default(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn export(results: &RunResults, format: ExportFormat) -> Result<Vec<u8>, MetricsError> {
    match format {
        ExportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(results)?;
            v.push(b'\n');
            Ok(v)
        }
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "flow", "app", "cc", "aqm", "mode", "throughput_bps", "goodput_bps", "srtt_mean_us", "srtt_p50_us",
                "srtt_p95_us", "srtt_p99_us", "jitter_us", "qdelay_mean_us", "qdelay_p50_us", "qdelay_p95_us",
                "qdelay_p99_us", "drops_aqm", "drops_overflow", "marks",
            ])?;
            for f in &results.flows {
                let mut row = vec![
                    f.id.to_string(),
                    f.app.clone(),
                    f.cc.clone(),
                    f.aqm.clone(),
                    f.mode.clone(),
                    f.throughput_bps.to_string(),
                    f.goodput_bps.to_string(),
                ];
                row.extend(dist_cells(&f.srtt_us));
                row.push(opt(f.jitter_us));
                row.extend(dist_cells(&f.qdelay_us));
                row.extend([f.drops.aqm.to_string(), f.drops.overflow.to_string(), f.marks.to_string()]);
                w.write_record(&row)?;
            }
            let a = &results.aggregate;
            let mut row = vec![
                "all".to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                a.throughput_bps.to_string(),
                a.goodput_bps.to_string(),
            ];
            row.extend(dist_cells(&a.srtt_us));
            row.push(String::new());
            row.extend(dist_cells(&a.qdelay_us));
            row.extend([a.drops.aqm.to_string(), a.drops.overflow.to_string(), a.marks.to_string()]);
            w.write_record(&row)?;
            w.into_inner().map_err(|e| MetricsError::Csv(e.into_error().into()))
        }
    }
}
