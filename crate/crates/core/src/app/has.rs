use std::sync::Arc;

use super::abr::{AbrContext, AbrPolicy};
use super::ladder::Ladder;
use super::player::{PlaybackLog, Player, PlayerConfig};
use crate::sim::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegmentRequest {
    pub index: u64,
    pub level: usize,
    pub bytes: u64,
    pub requested_at: SimTime,
}

/// Sequential segment fetcher: one outstanding request at a time.
pub struct HasClient {
    player: Player,
    abr: Box<dyn AbrPolicy>,
    ladder: Arc<Ladder>,
    next_index: u64,
    outstanding: Option<SegmentRequest>,
}

impl HasClient {
    pub fn new(cfg: PlayerConfig, abr: Box<dyn AbrPolicy>, ladder: Arc<Ladder>) -> Self {
        HasClient {
            player: Player::new(cfg),
            abr,
            ladder,
            next_index: 0,
            outstanding: None,
        }
    }

    pub fn player(&self) -> &Player {
        &self.player
    }

    pub fn abr_name(&self) -> &'static str {
        self.abr.name()
    }

    pub fn outstanding(&self) -> Option<SegmentRequest> {
        self.outstanding
    }

    pub fn tick(&mut self, now: SimTime) {
        self.player.playback_tick(now);
    }

    /// Decides the next segment's level and marks it outstanding.
    pub fn issue_request(&mut self, now: SimTime) -> SegmentRequest {
        assert!(self.outstanding.is_none(), "one request at a time");
        self.player.playback_tick(now);
        let ctx = AbrContext {
            history_bps: self.player.history(),
            buffer: self.player.buffer(),
            segment_duration: self.player.config().segment_duration,
            ladder: &self.ladder,
            last_level: self.player.qoe_log().last().map(|r| r.level),
        };
        let level = self.abr.decide(&ctx).min(self.ladder.top());
        let req = SegmentRequest {
            index: self.next_index,
            level,
            bytes: self.ladder.segment_bytes(level, self.player.config().segment_duration),
            requested_at: now,
        };
        self.next_index += 1;
        self.outstanding = Some(req);
        req
    }

    /// Records the completed download; returns when the next request may go out.
    pub fn on_segment_complete(&mut self, now: SimTime) -> SimTime {
        let req = self.outstanding.take().expect("a request was outstanding");
        let vmaf = self.ladder.level(req.level).vmaf;
        self.player
            .on_segment_complete(req.index, req.level, vmaf, req.bytes, now - req.requested_at, now);
        self.player.next_request_at(now)
    }

    pub fn finish(&mut self, horizon: SimTime) -> PlaybackLog {
        self.player.finish(horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::app::abr::{ConPlus, Fixed};

    #[test]
    fn first_request_is_lowest_rung() {
        let mut c = HasClient::new(
            PlayerConfig::default(),
            Box::new(ConPlus { safety: 0.9 }),
            Arc::new(Ladder::default()),
        );
        let r = c.issue_request(SimTime::ZERO);
        assert_eq!((r.index, r.level, r.bytes), (0, 0, 125_000));
    }

    #[test]
    fn fixed_policy_clamps_to_ladder() {
        let mut c = HasClient::new(PlayerConfig::default(), Box::new(Fixed(99)), Arc::new(Ladder::default()));
        assert_eq!(c.issue_request(SimTime::ZERO).level, 9);
    }

    #[test]
    fn settles_at_rung_matching_capacity() {
        // Capacity just above level-k bitrate / 0.9.
        let ladder = Arc::new(Ladder::default());
        let k = 6;
        let cap = ladder.level(k).bitrate_bps as f64 / 0.9 * 1.02;
        let mut c = HasClient::new(PlayerConfig::default(), Box::new(ConPlus { safety: 0.9 }), ladder);
        let mut now = SimTime::ZERO;
        let mut levels = vec![];
        for _ in 0..40 {
            let at = c.player().next_request_at(now);
            let r = c.issue_request(at);
            let dl = SimTime::from_secs_f64(r.bytes as f64 * 8.0 / cap);
            now = at + dl;
            c.on_segment_complete(now);
            levels.push(r.level);
        }
        assert!(levels[10..].iter().all(|&l| l == k), "{levels:?}");
    }
}
