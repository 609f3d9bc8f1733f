use serde::{Deserialize, Serialize};

use crate::sim::SimTime;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowId(pub u32);

impl FlowId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for FlowId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// IP ECN codepoint (ECT(1) is not used here).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ecn {
    #[default]
    NotEct,
    Ect0,
    Ce,
}

/// Application payload descriptor carried alongside a packet.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DataTag {
    /// Frame id (VBR) or segment index (HAS).
    pub unit: u64,
    /// Last packet of its frame/segment.
    pub last: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Packet {
    pub flow: FlowId,
    /// Data segment index; shared by a segment's original and retransmissions.
    pub seq: u64,
    /// Unique per transmission.
    pub pkt_num: u64,
    pub size: u32,
    pub ecn: Ecn,
    pub sent_at: SimTime,
    pub enqueued_at: SimTime,
    pub tag: DataTag,
}

impl Packet {
    pub fn new(flow: FlowId, seq: u64, size: u32, sent_at: SimTime) -> Self {
        Packet {
            flow,
            seq,
            pkt_num: seq,
            size,
            ecn: Ecn::NotEct,
            sent_at,
            enqueued_at: sent_at,
            tag: DataTag::default(),
        }
    }

    pub fn with_ecn(mut self, ecn: Ecn) -> Self {
        self.ecn = ecn;
        self
    }
}
