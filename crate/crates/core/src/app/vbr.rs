use serde::{Deserialize, Serialize};

use crate::sim::{RandomStream, SimError, SimTime, StreamKind, TruncGaussParams};

pub const MIN_FRAME_BYTES: f64 = 67.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VbrSourceConfig {
    pub datarate_bps: f64,
    pub fps: f64,
    /// Frame size in bytes.
    pub size_dist: TruncGaussParams,
    /// Emission jitter in milliseconds.
    pub jitter_dist: TruncGaussParams,
}

impl VbrSourceConfig {
    /// XR-style source: mean frame `datarate/fps/8`, 15% std, sizes in `[67, 1.5 mean]`,
    /// jitter N(0, 2 ms) truncated to +-4 ms.
    pub fn xr(datarate_bps: f64, fps: f64) -> Self {
        let mean = datarate_bps / fps / 8.0;
        VbrSourceConfig {
            datarate_bps,
            fps,
            size_dist: TruncGaussParams {
                mean,
                std: 0.15 * mean,
                min: MIN_FRAME_BYTES,
                max: 1.5 * mean,
            },
            jitter_dist: TruncGaussParams {
                mean: 0.0,
                std: 2.0,
                min: -4.0,
                max: 4.0,
            },
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.datarate_bps > 0.0 && self.fps > 0.0) {
            return Err(SimError::InvalidDistribution("datarate and fps must be positive".into()));
        }
        self.size_dist.validate()?;
        self.jitter_dist.validate()?;
        if self.size_dist.min < MIN_FRAME_BYTES {
            return Err(SimError::InvalidDistribution(format!(
                "frame size floor {} below {MIN_FRAME_BYTES} bytes",
                self.size_dist.min
            )));
        }
        Ok(())
    }

    pub fn period(&self) -> SimTime {
        SimTime::from_secs_f64(1.0 / self.fps)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Frame {
    pub id: u64,
    pub size: u32,
    pub emit_at: SimTime,
}

/// Frames are scheduled on the nominal `k / fps` grid plus independent
/// jitter, so the jitter never accumulates into drift.
pub struct VbrSource {
    cfg: VbrSourceConfig,
    sizes: RandomStream,
    jitter: RandomStream,
    next_id: u64,
    last_emit: Option<SimTime>,
    offset: SimTime,
}

impl VbrSource {
    pub fn new(cfg: VbrSourceConfig, seed: u64, flow: u64) -> Result<Self, SimError> {
        cfg.validate()?;
        Ok(VbrSource {
            cfg,
            sizes: RandomStream::new(seed, StreamKind::TrafficSize, flow),
            jitter: RandomStream::new(seed, StreamKind::TrafficJitter, flow),
            next_id: 0,
            last_emit: None,
            offset: SimTime::ZERO,
        })
    }

    /// Shifts the whole frame grid, e.g. to start a flow later.
    pub fn with_offset(mut self, offset: SimTime) -> Self {
        self.offset = offset;
        self
    }

    pub fn config(&self) -> &VbrSourceConfig {
        &self.cfg
    }

    pub fn draw_size(&mut self) -> u32 {
        self.sizes.truncated_gaussian(&self.cfg.size_dist).round() as u32
    }

    pub fn draw_jitter_ms(&mut self) -> f64 {
        self.jitter.truncated_gaussian(&self.cfg.jitter_dist)
    }

    pub fn next_frame(&mut self) -> Frame {
        let id = self.next_id;
        self.next_id += 1;
        let size = self.draw_size();
        let nominal = self.offset.as_nanos() as f64 + id as f64 * 1e9 / self.cfg.fps;
        let jittered = (nominal + self.draw_jitter_ms() * 1e6).max(0.0);
        let mut emit_at = SimTime::from_nanos(jittered.round() as u64);
        if let Some(last) = self.last_emit {
            emit_at = emit_at.max(last + SimTime::from_nanos(1));
        }
        self.last_emit = Some(emit_at);
        Frame { id, size, emit_at }
    }
}
