use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::SimTime;

#[derive(Debug, Error)]
pub enum LadderError {
    #[error("ladder line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("ladder is empty")]
    Empty,
    #[error("invalid ladder: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderLevel {
    pub index: usize,
    pub bitrate_bps: u64,
    pub width: u32,
    pub height: u32,
    pub vmaf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    levels: Vec<LadderLevel>,
}

const RESOLUTIONS: [(u32, u32); 10] = [
    (512, 288),
    (640, 360),
    (768, 432),
    (960, 540),
    (1280, 720),
    (1600, 900),
    (1920, 1080),
    (2560, 1440),
    (3200, 1800),
    (3840, 2160),
];

impl Default for Ladder {
    /// Ten rungs, bitrates geometric from 0.5 to 49 Mb/s, VMAF linear from 31 to 97.
    fn default() -> Self {
        let n = RESOLUTIONS.len();
        let (lo, hi) = (0.5e6f64, 49e6f64);
        let levels = RESOLUTIONS
            .iter()
            .enumerate()
            .map(|(i, &(width, height))| {
                let f = i as f64 / (n - 1) as f64;
                LadderLevel {
                    index: i,
                    bitrate_bps: (lo * (hi / lo).powf(f)).round() as u64,
                    width,
                    height,
                    vmaf: 31.0 + (97.0 - 31.0) * f,
                }
            })
            .collect();
        Ladder { levels }
    }
}

impl Ladder {
    pub fn new(levels: Vec<LadderLevel>) -> Result<Self, LadderError> {
        if levels.is_empty() {
            return Err(LadderError::Empty);
        }
        for (i, l) in levels.iter().enumerate() {
            if l.index != i {
                return Err(LadderError::Invalid(format!("level {i} has index {}", l.index)));
            }
            if l.bitrate_bps == 0 {
                return Err(LadderError::Invalid(format!("level {i} has zero bitrate")));
            }
            if !(0.0..=100.0).contains(&l.vmaf) {
                return Err(LadderError::Invalid(format!("level {i} vmaf {} outside 0..100", l.vmaf)));
            }
        }
        for w in levels.windows(2) {
            if w[1].bitrate_bps <= w[0].bitrate_bps {
                return Err(LadderError::Invalid("bitrates must strictly increase".into()));
            }
            if w[1].vmaf < w[0].vmaf {
                return Err(LadderError::Invalid("vmaf must not decrease".into()));
            }
        }
        Ok(Ladder { levels })
    }

    pub fn levels(&self) -> &[LadderLevel] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn top(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, i: usize) -> &LadderLevel {
        &self.levels[i]
    }

    pub fn segment_bytes(&self, level: usize, duration: SimTime) -> u64 {
        let bits = self.levels[level].bitrate_bps as u128 * duration.as_nanos() as u128 / 1_000_000_000;
        (bits / 8).max(1) as u64
    }
}

#[derive(Deserialize, Serialize)]
struct Row {
    index: usize,
    bitrate_bps: u64,
    width: u32,
    height: u32,
    vmaf: f64,
}

/// Reads `index,bitrate_bps,width,height,vmaf` rows with a header line.
pub fn load_ladder<R: Read>(src: R) -> Result<Ladder, LadderError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(src);
    let mut levels = Vec::new();
    for (i, rec) in rd.deserialize::<Row>().enumerate() {
        let r = rec.map_err(|e| LadderError::Parse {
            line: e.position().map_or(i as u64 + 2, |p| p.line()),
            msg: e.to_string(),
        })?;
        levels.push(LadderLevel {
            index: r.index,
            bitrate_bps: r.bitrate_bps,
            width: r.width,
            height: r.height,
            vmaf: r.vmaf,
        });
    }
    Ladder::new(levels)
}

pub fn write_ladder<W: std::io::Write>(ladder: &Ladder, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for l in ladder.levels() {
        w.serialize(Row {
            index: l.index,
            bitrate_bps: l.bitrate_bps,
            width: l.width,
            height: l.height,
            vmaf: l.vmaf,
        })?;
    }
    w.flush()?;
    Ok(())
}
