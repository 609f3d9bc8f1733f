use serde::{Deserialize, Serialize};

use crate::sim::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerConfig {
    pub max_buffer: SimTime,
    pub segment_duration: SimTime,
    /// Media needed before playback starts or resumes.
    pub startup_threshold: SimTime,
}

impl Default for PlayerConfig {
    fn default() -> Self {
        PlayerConfig {
            max_buffer: SimTime::from_secs(6),
            segment_duration: SimTime::from_secs(2),
            startup_threshold: SimTime::from_secs(2),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayerPhase {
    Startup,
    Playing,
    Rebuffering,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub segment_idx: u64,
    pub level: usize,
    pub vmaf: f64,
    pub duration_s: f64,
    pub download_ms: f64,
    pub buffer_ms_after: f64,
    pub stall_ms_during: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StallRecord {
    pub start: SimTime,
    pub duration: SimTime,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlaybackLog {
    pub startup_delay: Option<SimTime>,
    pub stalls: Vec<StallRecord>,
    pub played: SimTime,
    pub discarded: SimTime,
}

/// Playback buffer driven by segment arrivals and the passage of time.
#[derive(Clone, Debug)]
pub struct Player {
    cfg: PlayerConfig,
    phase: PlayerPhase,
    buffer: SimTime,
    last_tick: SimTime,
    stall_start: Option<SimTime>,
    stall_since_segment: SimTime,
    downloaded: SimTime,
    history: Vec<f64>,
    qoe_log: Vec<SegmentRecord>,
    playback: PlaybackLog,
}

impl Player {
    pub fn new(cfg: PlayerConfig) -> Self {
        Player {
            cfg,
            phase: PlayerPhase::Startup,
            buffer: SimTime::ZERO,
            last_tick: SimTime::ZERO,
            stall_start: None,
            stall_since_segment: SimTime::ZERO,
            downloaded: SimTime::ZERO,
            history: Vec::new(),
            qoe_log: Vec::new(),
            playback: PlaybackLog::default(),
        }
    }

    pub fn config(&self) -> &PlayerConfig {
        &self.cfg
    }

    pub fn phase(&self) -> PlayerPhase {
        self.phase
    }

    pub fn buffer(&self) -> SimTime {
        self.buffer
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn qoe_log(&self) -> &[SegmentRecord] {
        &self.qoe_log
    }

    pub fn playback(&self) -> &PlaybackLog {
        &self.playback
    }

    pub fn downloaded(&self) -> SimTime {
        self.downloaded
    }

    /// Advances playback to `now`.
    pub fn playback_tick(&mut self, now: SimTime) {
        let dt = now.saturating_sub(self.last_tick);
        self.last_tick = self.last_tick.max(now);
        if self.phase != PlayerPhase::Playing || dt == SimTime::ZERO {
            return;
        }
        if dt < self.buffer {
            self.buffer = self.buffer - dt;
            self.playback.played += dt;
        } else {
            self.playback.played += self.buffer;
            self.stall_start = Some(now - (dt - self.buffer));
            self.buffer = SimTime::ZERO;
            self.phase = PlayerPhase::Rebuffering;
        }
    }

    /// Total stall time up to `now`, including an ongoing stall.
    pub fn rebuffer_time(&self, now: SimTime) -> SimTime {
        let closed = self.playback.stalls.iter().fold(SimTime::ZERO, |a, s| a + s.duration);
        closed + self.stall_start.map_or(SimTime::ZERO, |s| now.saturating_sub(s))
    }

    pub fn on_segment_complete(
        &mut self,
        segment_idx: u64,
        level: usize,
        vmaf: f64,
        size_bytes: u64,
        download_time: SimTime,
        now: SimTime,
    ) {
        self.playback_tick(now);
        let seg = self.cfg.segment_duration;
        self.downloaded += seg;
        let room = self.cfg.max_buffer.saturating_sub(self.buffer);
        if seg > room {
            self.playback.discarded += seg - room;
        }
        self.buffer = (self.buffer + seg).min(self.cfg.max_buffer);
        let secs = download_time.as_secs_f64().max(1e-9);
        self.history.push(size_bytes as f64 * 8.0 / secs);

        if self.phase != PlayerPhase::Playing && self.buffer >= self.cfg.startup_threshold {
            match self.phase {
                PlayerPhase::Startup => self.playback.startup_delay = Some(now),
                PlayerPhase::Rebuffering => {
                    let start = self.stall_start.take().expect("rebuffering has a start");
                    let duration = now - start;
                    self.playback.stalls.push(StallRecord { start, duration });
                    self.stall_since_segment += duration;
                }
                PlayerPhase::Playing => unreachable!(),
            }
            self.phase = PlayerPhase::Playing;
        }
        self.qoe_log.push(SegmentRecord {
            segment_idx,
            level,
            vmaf,
            duration_s: seg.as_secs_f64(),
            download_ms: download_time.as_nanos() as f64 / 1e6,
            buffer_ms_after: self.buffer.as_nanos() as f64 / 1e6,
            stall_ms_during: self.stall_since_segment.as_nanos() as f64 / 1e6,
        });
        self.stall_since_segment = SimTime::ZERO;
    }

    /// Earliest time the next segment fits in the buffer.
    pub fn next_request_at(&self, now: SimTime) -> SimTime {
        let need = (self.buffer + self.cfg.segment_duration).saturating_sub(self.cfg.max_buffer);
        if need == SimTime::ZERO || self.phase != PlayerPhase::Playing {
            now
        } else {
            now + need
        }
    }

    /// Closes the session at `horizon`; an open stall is counted up to it.
    pub fn finish(&mut self, horizon: SimTime) -> PlaybackLog {
        self.playback_tick(horizon);
        let mut log = self.playback.clone();
        if let Some(start) = self.stall_start {
            log.stalls.push(StallRecord {
                start,
                duration: horizon - start,
            });
        }
        log
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: u64) -> SimTime {
        SimTime::from_secs(x)
    }

    #[test]
    fn exact_drain_enters_rebuffering() {
        let mut p = Player::new(PlayerConfig::default());
        p.on_segment_complete(0, 0, 31.0, 125_000, s(1), s(1));
        assert_eq!(p.phase(), PlayerPhase::Playing);
        p.playback_tick(s(3));
        assert_eq!(p.phase(), PlayerPhase::Rebuffering);
        assert_eq!(p.buffer(), SimTime::ZERO);
        assert_eq!(p.rebuffer_time(s(5)), s(2));
    }

    #[test]
    fn buffer_caps_at_max() {
        let mut p = Player::new(PlayerConfig::default());
        p.on_segment_complete(0, 0, 31.0, 1, s(0) + SimTime::from_millis(1), SimTime::ZERO);
        p.on_segment_complete(1, 0, 31.0, 1, SimTime::from_millis(1), SimTime::ZERO);
        p.on_segment_complete(2, 0, 31.0, 1, SimTime::from_millis(1), SimTime::ZERO);
        assert_eq!(p.buffer(), s(6));
        assert_eq!(p.next_request_at(s(0)), s(2));
    }

    #[test]
    fn throughput_estimate() {
        let mut p = Player::new(PlayerConfig::default());
        p.on_segment_complete(0, 5, 60.0, 2_500_000, s(1), s(1));
        assert_eq!(p.history(), &[20e6]);
    }

    #[test]
    fn stall_is_recorded_on_resume() {
        let mut p = Player::new(PlayerConfig::default());
        p.on_segment_complete(0, 0, 31.0, 1, s(1), s(1));
        p.on_segment_complete(1, 0, 31.0, 1, s(4), s(5));
        let log = p.finish(s(5));
        assert_eq!(log.stalls, vec![StallRecord { start: s(3), duration: s(2) }]);
        assert_eq!(p.qoe_log()[1].stall_ms_during, 2000.0);
        assert_eq!(log.startup_delay, Some(s(1)));
    }

    #[test]
    fn media_accounting() {
        let mut p = Player::new(PlayerConfig::default());
        let mut t = SimTime::ZERO;
        for i in 0..20 {
            t += SimTime::from_millis(1700);
            p.on_segment_complete(i, 0, 31.0, 1, SimTime::from_millis(1700), t);
        }
        let end = t + SimTime::from_millis(300);
        let log = p.finish(end);
        assert_eq!(p.downloaded(), log.played + p.buffer() + log.discarded);
    }
}
