//! One closed-loop run: applications feed senders, packets queue per flow at
//! the gNB, a single radio link drains the queues round-robin, receivers ack
//! over an uncongested return path.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::app::{
    AbrKind, Frame, HasClient, Ladder, PlayerConfig, SegmentRecord, SegmentRequest, VbrSource,
    VbrSourceConfig,
};
use crate::channel::{transmit, ChannelTrace, DeliveryOutcome};
use crate::metrics::{
    session_qoe, summarize, AggregateResult, Arrival, Drops, FlowResult, JitterTracker, RateBinner,
    RunInfo, RunResults, SessionResult,
};
use crate::packet::{FlowId, Packet};
use crate::queue::{ActionMode, AqmConfig, EnqueueOutcome, FlowQueue, QueueError, QueueEvent, RoundRobin};
use crate::sim::{Engine, RandomStream, SimError, SimTime, StreamKind};
use crate::transport::{AckRecord, Receiver, SendPoll, Sender, SenderConfig, TransportEvent};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error(transparent)]
    Queue(#[from] QueueError),
    #[error("flow {flow}: {source}")]
    App { flow: usize, source: SimError },
    #[error("scenario has no flows")]
    NoFlows,
}

#[derive(Clone, Debug)]
pub enum AppSpec {
    Vbr(VbrSourceConfig),
    Has {
        abr: AbrKind,
        player: PlayerConfig,
        ladder: Arc<Ladder>,
    },
    /// Always has data to send.
    Bulk,
}

impl AppSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AppSpec::Vbr(_) => "vbr",
            AppSpec::Has { .. } => "has",
            AppSpec::Bulk => "bulk",
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowSpec {
    pub app: AppSpec,
    pub sender: SenderConfig,
    pub queue_capacity: u64,
    pub aqm: AqmConfig,
    pub mode: ActionMode,
    pub start: SimTime,
}

#[derive(Clone, Debug)]
pub struct WorldConfig {
    pub horizon: SimTime,
    pub seed: u64,
    pub trace: ChannelTrace,
    pub flows: Vec<FlowSpec>,
    pub sample_interval: SimTime,
    pub rate_window: SimTime,
    pub log_queue_events: bool,
}

/// Periodic per-flow state, one row per sample tick.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimelineRow {
    pub t_us: u64,
    pub cwnd_bytes: u64,
    pub ssthresh_bytes: u64,
    pub bytes_in_flight: u64,
    pub srtt_us: Option<u64>,
    pub phase: &'static str,
    pub btl_bw_bps: Option<f64>,
    pub rt_prop_us: Option<u64>,
    pub ecn_alpha: Option<f64>,
    pub capacity_bps: u64,
    pub queue_bytes: u64,
    pub queue_pkts: u64,
    pub red_avg: Option<f64>,
    pub enqueued: u64,
    pub delivered: u64,
    pub dropped_aqm: u64,
    pub dropped_overflow: u64,
    pub marked: u64,
    pub buffer_s: Option<f64>,
    pub rebuffer_s: Option<f64>,
    pub conserved: bool,
}

pub struct FlowOutput {
    pub transport_events: Vec<TransportEvent>,
    pub queue_events: Vec<QueueEvent>,
    pub timeline: Vec<TimelineRow>,
    pub qoe_log: Vec<SegmentRecord>,
    pub throughput: crate::metrics::MetricSeries,
    pub goodput: crate::metrics::MetricSeries,
    pub link_losses: u64,
}

pub struct WorldOutput {
    pub results: RunResults,
    pub flows: Vec<FlowOutput>,
}

#[derive(Clone, Copy, Debug)]
enum Ev {
    AppFrame(usize),
    HasIssue(usize),
    HasArrive(usize),
    Wake(usize),
    Rto(usize, u64),
    LinkFree,
    Deliver(Packet),
    Ack(usize, AckRecord),
    AredTick(usize),
    Sample,
}

enum App {
    Vbr {
        src: VbrSource,
        next: Frame,
        /// Frames written but not yet fully delivered.
        emitted: VecDeque<(u64, SimTime)>,
        frames: JitterTracker,
    },
    Has {
        client: HasClient,
        pending: Option<SegmentRequest>,
    },
    Bulk,
}

struct Flow {
    spec: FlowSpec,
    app: App,
    sender: Sender,
    receiver: Receiver,
    wake_at: Option<SimTime>,
    rto_gen: Option<u64>,
    last_delivery: SimTime,
    tx: RateBinner,
    rx: RateBinner,
    srtt_us: Vec<f64>,
    qdelay_us: Vec<f64>,
    packets: JitterTracker,
    link_losses: u64,
    timeline: Vec<TimelineRow>,
}

pub struct World {
    cfg: WorldConfig,
    flows: Vec<Flow>,
    queues: Vec<FlowQueue>,
    rr: RoundRobin,
    link_busy: bool,
    mac: RandomStream,
    conservation_ok: bool,
    scratch: Vec<Packet>,
}

impl World {
    pub fn new(cfg: WorldConfig) -> Result<Self, WorldError> {
        if cfg.flows.is_empty() {
            return Err(WorldError::NoFlows);
        }
        let mut flows = Vec::with_capacity(cfg.flows.len());
        let mut queues = Vec::with_capacity(cfg.flows.len());
        for (i, spec) in cfg.flows.iter().enumerate() {
            let id = FlowId(i as u32);
            let mut queue = FlowQueue::new(id, spec.queue_capacity, spec.aqm, spec.mode, cfg.seed)?;
            if cfg.log_queue_events {
                queue = queue.with_event_log();
            }
            let mut scfg = spec.sender;
            scfg.seed = cfg.seed;
            let mut sender = Sender::new(id, scfg);
            let app = match &spec.app {
                AppSpec::Vbr(v) => {
                    let mut src = VbrSource::new(*v, cfg.seed, i as u64)
                        .map_err(|source| WorldError::App { flow: i, source })?
                        .with_offset(spec.start);
                    App::Vbr {
                        next: src.next_frame(),
                        src,
                        emitted: VecDeque::new(),
                        frames: JitterTracker::new(Some(v.period())),
                    }
                }
                AppSpec::Has { abr, player, ladder } => App::Has {
                    client: HasClient::new(*player, abr.build(), ladder.clone()),
                    pending: None,
                },
                AppSpec::Bulk => {
                    sender.set_bulk(true);
                    App::Bulk
                }
            };
            queues.push(queue);
            flows.push(Flow {
                spec: spec.clone(),
                app,
                sender,
                receiver: Receiver::new(),
                wake_at: None,
                rto_gen: None,
                last_delivery: SimTime::ZERO,
                tx: RateBinner::new(cfg.rate_window),
                rx: RateBinner::new(cfg.rate_window),
                srtt_us: Vec::new(),
                qdelay_us: Vec::new(),
                packets: JitterTracker::new(None),
                link_losses: 0,
                timeline: Vec::new(),
            });
        }
        Ok(World {
            mac: RandomStream::new(cfg.seed, StreamKind::MacLoss, 0),
            cfg,
            flows,
            queues,
            rr: RoundRobin::new(),
            link_busy: false,
            conservation_ok: true,
            scratch: Vec::new(),
        })
    }

    pub fn run(mut self) -> WorldOutput {
        let mut eng: Engine<Ev> = Engine::new();
        for (i, f) in self.flows.iter_mut().enumerate() {
            let start = f.spec.start;
            match &mut f.app {
                App::Vbr { next, .. } => {
                    eng.schedule(Ev::AppFrame(i), next.emit_at).expect("future");
                }
                App::Has { .. } => {
                    eng.schedule(Ev::HasIssue(i), start).expect("future");
                }
                App::Bulk => {
                    eng.schedule(Ev::Wake(i), start).expect("future");
                    f.wake_at = Some(start);
                }
            }
            if let Some(iv) = self.queues[i].ared_interval() {
                eng.schedule(Ev::AredTick(i), iv).expect("future");
            }
        }
        eng.schedule(Ev::Sample, SimTime::ZERO).expect("future");
        let horizon = self.cfg.horizon;
        let summary = eng.run_until(horizon, |eng, ev| self.handle(eng, ev));
        self.finish(summary.events_fired)
    }

    fn owd(&self, now: SimTime) -> SimTime {
        self.cfg.trace.at(now).base_owd()
    }

    fn handle(&mut self, eng: &mut Engine<Ev>, ev: Ev) {
        let now = eng.now();
        match ev {
            Ev::AppFrame(i) => {
                let f = &mut self.flows[i];
                let App::Vbr { src, next, emitted, .. } = &mut f.app else {
                    unreachable!()
                };
                let fr = std::mem::replace(next, src.next_frame());
                emitted.push_back((fr.id, fr.emit_at));
                f.sender.write(fr.id, fr.size as u64);
                eng.schedule(Ev::AppFrame(i), next.emit_at).expect("frames move forward");
                self.pump(eng, i);
            }
            Ev::HasIssue(i) => {
                let owd = self.owd(now);
                let App::Has { client, pending } = &mut self.flows[i].app else {
                    unreachable!()
                };
                *pending = Some(client.issue_request(now));
                eng.schedule_in(Ev::HasArrive(i), owd);
            }
            Ev::HasArrive(i) => {
                let f = &mut self.flows[i];
                let App::Has { pending, .. } = &mut f.app else {
                    unreachable!()
                };
                let req = pending.take().expect("request in transit");
                f.sender.write(req.index, req.bytes);
                self.pump(eng, i);
            }
            Ev::Wake(i) => {
                if self.flows[i].wake_at == Some(now) {
                    self.flows[i].wake_at = None;
                    self.pump(eng, i);
                }
            }
            Ev::Rto(i, gen) => {
                let f = &mut self.flows[i];
                if f.sender.timer() == (Some(now), gen) {
                    f.rto_gen = None;
                    f.sender.on_rto(now);
                    self.pump(eng, i);
                }
            }
            Ev::LinkFree => {
                self.link_busy = false;
                self.try_transmit(eng);
            }
            Ev::Deliver(pkt) => self.deliver(eng, pkt),
            Ev::Ack(i, ack) => {
                let f = &mut self.flows[i];
                f.sender.on_ack(&ack, now).expect("receiver acks only sent packets");
                f.srtt_us.extend(f.sender.drain_srtt_samples().map(|s| s.value().as_nanos() as f64 / 1e3));
                self.pump(eng, i);
            }
            Ev::AredTick(i) => {
                let q = &mut self.queues[i];
                q.ared_tick();
                let iv = q.ared_interval().expect("ARED queue");
                eng.schedule_in(Ev::AredTick(i), iv);
            }
            Ev::Sample => {
                self.sample(now);
                eng.schedule_in(Ev::Sample, self.cfg.sample_interval);
            }
        }
    }

    /// Lets flow `i` send everything cwnd and pacing allow, then re-arms its timers.
    fn pump(&mut self, eng: &mut Engine<Ev>, i: usize) {
        let now = eng.now();
        let mut sent = false;
        loop {
            let f = &mut self.flows[i];
            match f.sender.poll_send(now) {
                SendPoll::Send(pkt) => {
                    f.tx.add(now, pkt.size as u64);
                    if let EnqueueOutcome::Enqueued { .. } = self.queues[i].enqueue(pkt, now) {
                        sent = true;
                    }
                }
                SendPoll::WaitUntil(t) => {
                    if f.wake_at.is_none_or(|w| t < w) {
                        f.wake_at = Some(t);
                        eng.schedule(Ev::Wake(i), t).expect("pacing is in the future");
                    }
                    break;
                }
                SendPoll::Idle => break,
            }
        }
        let f = &mut self.flows[i];
        if let (Some(deadline), gen) = f.sender.timer() {
            if f.rto_gen != Some(gen) {
                f.rto_gen = Some(gen);
                eng.schedule(Ev::Rto(i, gen), deadline.max(now)).expect("future");
            }
        }
        if sent {
            self.try_transmit(eng);
        }
    }

    fn try_transmit(&mut self, eng: &mut Engine<Ev>) {
        if self.link_busy {
            return;
        }
        let now = eng.now();
        let picked = self.rr.dequeue(&mut self.queues, now, &mut self.scratch);
        self.scratch.clear();
        let Some((_, pkt)) = picked else { return };
        let i = pkt.flow.index();
        self.flows[i].qdelay_us.push((now - pkt.enqueued_at).as_nanos() as f64 / 1e3);
        let Some(tx) = transmit(pkt.size, now, &self.cfg.trace, &mut self.mac) else {
            self.flows[i].link_losses += 1;
            return;
        };
        self.link_busy = true;
        eng.schedule(Ev::LinkFree, tx.link_free_at).expect("future");
        let f = &mut self.flows[i];
        match tx.outcome {
            DeliveryOutcome::Delivered { at } => {
                let at = at.max(f.last_delivery);
                f.last_delivery = at;
                eng.schedule(Ev::Deliver(pkt), at).expect("future");
            }
            DeliveryOutcome::Lost => f.link_losses += 1,
        }
    }

    fn deliver(&mut self, eng: &mut Engine<Ev>, pkt: Packet) {
        let now = eng.now();
        let owd = self.owd(now);
        let i = pkt.flow.index();
        let f = &mut self.flows[i];
        let out = f.receiver.on_packet(&pkt, now);
        f.packets.on_arrival(Arrival {
            at: now,
            sent_at: pkt.sent_at,
        });
        let mut next_issue = None;
        for d in &out.delivered {
            f.rx.add(now, d.size as u64);
            if !d.tag.last {
                continue;
            }
            match &mut f.app {
                App::Vbr { emitted, frames, .. } => {
                    while let Some(&(id, at)) = emitted.front() {
                        if id > d.tag.unit {
                            break;
                        }
                        emitted.pop_front();
                        if id == d.tag.unit {
                            frames.on_arrival(Arrival { at: now, sent_at: at });
                        }
                    }
                }
                App::Has { client, .. } => {
                    if client.outstanding().is_some_and(|r| r.index == d.tag.unit) {
                        next_issue = Some(client.on_segment_complete(now));
                    }
                }
                App::Bulk => {}
            }
        }
        eng.schedule_in(Ev::Ack(i, out.ack), owd);
        if let Some(t) = next_issue {
            eng.schedule(Ev::HasIssue(i), t.max(now)).expect("future");
        }
    }

    fn sample(&mut self, now: SimTime) {
        let capacity_bps = self.cfg.trace.at(now).capacity_bps;
        for (f, q) in self.flows.iter_mut().zip(&self.queues) {
            let snap = f.sender.snapshot();
            let c = q.counters();
            let conserved = c.conserved(q.len() as u64);
            self.conservation_ok &= conserved;
            let (buffer_s, rebuffer_s) = match &mut f.app {
                App::Has { client, .. } => {
                    client.tick(now);
                    let p = client.player();
                    (Some(p.buffer().as_secs_f64()), Some(p.rebuffer_time(now).as_secs_f64()))
                }
                _ => (None, None),
            };
            f.timeline.push(TimelineRow {
                t_us: now.as_micros(),
                cwnd_bytes: snap.cwnd,
                ssthresh_bytes: snap.ssthresh,
                bytes_in_flight: f.sender.bytes_in_flight(),
                srtt_us: f.sender.srtt().map(SimTime::as_micros),
                phase: snap.phase,
                btl_bw_bps: snap.btl_bw_bps,
                rt_prop_us: snap.rt_prop.map(SimTime::as_micros),
                ecn_alpha: snap.ecn_alpha,
                capacity_bps,
                queue_bytes: q.occupancy(),
                queue_pkts: q.len() as u64,
                red_avg: q.red_avg(),
                enqueued: c.enqueued,
                delivered: c.delivered,
                dropped_aqm: c.dropped_aqm,
                dropped_overflow: c.dropped_overflow,
                marked: c.marked,
                buffer_s,
                rebuffer_s,
                conserved,
            });
        }
    }

    fn finish(mut self, events: u64) -> WorldOutput {
        let horizon = self.cfg.horizon;
        let secs = horizon.as_secs_f64();
        let mut flows_out = Vec::new();
        let mut results = Vec::new();
        let mut sessions = Vec::new();
        let mut all_srtt = Vec::new();
        let mut all_qdelay = Vec::new();
        for (i, (f, q)) in self.flows.iter_mut().zip(&mut self.queues).enumerate() {
            let c = q.counters();
            self.conservation_ok &= c.conserved(q.len() as u64);
            let mut qoe_log = Vec::new();
            let jitter = match &mut f.app {
                App::Vbr { frames, .. } => frames,
                _ => &mut f.packets,
            };
            let jitter_us = jitter.mean_iat_deviation().map(|s| s * 1e6);
            let jitter_rfc3550_us = jitter.mean_rfc3550().map(|s| s * 1e6);
            if let App::Has { client, .. } = &mut f.app {
                let playback = client.finish(horizon);
                qoe_log = client.player().qoe_log().to_vec();
                if let Ok(qoe) = session_qoe(&qoe_log, &playback) {
                    sessions.push(SessionResult { flow: i as u32, qoe });
                }
            }
            let st = f.sender.stats();
            all_srtt.extend_from_slice(&f.srtt_us);
            all_qdelay.extend_from_slice(&f.qdelay_us);
            results.push(FlowResult {
                id: i as u32,
                app: f.spec.app.name().into(),
                cc: f.spec.sender.cc.name().into(),
                aqm: f.spec.aqm.name().into(),
                mode: match q.mode() {
                    ActionMode::Drop => "drop".into(),
                    ActionMode::Mark => "mark".into(),
                },
                ecn: f.spec.sender.ecn,
                throughput_bps: f.tx.total() as f64 * 8.0 / secs,
                goodput_bps: f.rx.total() as f64 * 8.0 / secs,
                srtt_us: summarize(&mut f.srtt_us),
                jitter_us,
                jitter_rfc3550_us,
                qdelay_us: summarize(&mut f.qdelay_us),
                drops: Drops {
                    aqm: c.dropped_aqm,
                    overflow: c.dropped_overflow,
                },
                marks: c.marked,
                enqueued: c.enqueued,
                delivered: c.delivered,
                queued_at_end: q.len() as u64,
                retransmissions: st.retransmissions,
                rtos: st.rtos,
                ce_echoed: st.ce_echoed,
            });
            flows_out.push(FlowOutput {
                transport_events: f.sender.take_events(),
                queue_events: q.take_events(),
                timeline: std::mem::take(&mut f.timeline),
                qoe_log,
                throughput: f.tx.series("throughput", horizon),
                goodput: f.rx.series("goodput", horizon),
                link_losses: f.link_losses,
            });
        }
        let aggregate = AggregateResult {
            throughput_bps: results.iter().map(|r| r.throughput_bps).sum(),
            goodput_bps: results.iter().map(|r| r.goodput_bps).sum(),
            srtt_us: summarize(&mut all_srtt),
            qdelay_us: summarize(&mut all_qdelay),
            drops: Drops {
                aqm: results.iter().map(|r| r.drops.aqm).sum(),
                overflow: results.iter().map(|r| r.drops.overflow).sum(),
            },
            marks: results.iter().map(|r| r.marks).sum(),
        };
        WorldOutput {
            results: RunResults {
                run: RunInfo {
                    config_hash: String::new(),
                    seed: self.cfg.seed,
                    scenario: String::new(),
                    horizon_s: secs,
                    events,
                },
                flows: results,
                aggregate,
                sessions,
                conservation_ok: self.conservation_ok,
            },
            flows: flows_out,
        }
    }
}
