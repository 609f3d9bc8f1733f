use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::sim::SimTime;

/// How much of the transport history to keep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogLevel {
    None,
    /// Everything except per-packet send and ack records.
    #[default]
    Congestion,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportEventKind {
    Send,
    Retransmit,
    Ack,
    CeEcho,
    Rto,
    Loss,
    PhaseChange,
}

impl TransportEventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TransportEventKind::Send => "send",
            TransportEventKind::Retransmit => "retransmit",
            TransportEventKind::Ack => "ack",
            TransportEventKind::CeEcho => "ce_echo",
            TransportEventKind::Rto => "rto",
            TransportEventKind::Loss => "loss",
            TransportEventKind::PhaseChange => "phase_change",
        }
    }

    fn per_packet(self) -> bool {
        matches!(self, TransportEventKind::Send | TransportEventKind::Ack)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransportEvent {
    pub t: SimTime,
    pub kind: TransportEventKind,
    pub seq: u64,
    /// Window after the event took effect.
    pub cwnd: u64,
    pub bytes_in_flight: u64,
    pub srtt: Option<SimTime>,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct TransportLog {
    level: LogLevel,
    events: Vec<TransportEvent>,
}

impl TransportLog {
    pub fn new(level: LogLevel) -> Self {
        TransportLog { level, events: Vec::new() }
    }

    pub fn wants(&self, kind: TransportEventKind) -> bool {
        match self.level {
            LogLevel::None => false,
            LogLevel::Congestion => !kind.per_packet(),
            LogLevel::Full => true,
        }
    }

    pub fn push(&mut self, ev: TransportEvent) {
        if self.wants(ev.kind) {
            self.events.push(ev);
        }
    }

    pub fn events(&self) -> &[TransportEvent] {
        &self.events
    }

    pub fn take(&mut self) -> Vec<TransportEvent> {
        std::mem::take(&mut self.events)
    }
}

pub fn write_events_csv<W: Write>(events: &[TransportEvent], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_us", "event", "seq", "cwnd_bytes", "bytes_in_flight", "srtt_us", "detail"])?;
    for e in events {
        w.write_record([
            e.t.as_micros().to_string(),
            e.kind.as_str().to_string(),
            e.seq.to_string(),
            e.cwnd.to_string(),
            e.bytes_in_flight.to_string(),
            e.srtt.map(|s| s.as_micros().to_string()).unwrap_or_default(),
            e.detail.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
