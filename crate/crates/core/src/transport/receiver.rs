use std::collections::BTreeMap;

use super::AckRecord;
use crate::packet::{DataTag, Ecn, Packet};
use crate::sim::SimTime;

/// Data handed to the application in sequence order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Delivered {
    pub seq: u64,
    pub size: u32,
    pub tag: DataTag,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReceiveOutcome {
    pub ack: AckRecord,
    pub duplicate: bool,
    pub delivered: Vec<Delivered>,
}

/// Reassembles the sequence space and acknowledges every packet.
#[derive(Clone, Debug, Default)]
pub struct Receiver {
    next_expected: u64,
    out_of_order: BTreeMap<u64, (u32, DataTag)>,
    ce_count: u64,
    duplicates: u64,
    delivered_bytes: u64,
}

impl Receiver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_expected(&self) -> u64 {
        self.next_expected
    }

    pub fn ce_count(&self) -> u64 {
        self.ce_count
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }

    pub fn delivered_bytes(&self) -> u64 {
        self.delivered_bytes
    }

    pub fn on_packet(&mut self, p: &Packet, now: SimTime) -> ReceiveOutcome {
        if p.ecn == Ecn::Ce {
            self.ce_count += 1;
        }
        let mut delivered = Vec::new();
        let duplicate = p.seq < self.next_expected || self.out_of_order.contains_key(&p.seq);
        if duplicate {
            self.duplicates += 1;
        } else if p.seq == self.next_expected {
            delivered.push(Delivered {
                seq: p.seq,
                size: p.size,
                tag: p.tag,
            });
            self.next_expected += 1;
            while let Some((size, tag)) = self.out_of_order.remove(&self.next_expected) {
                delivered.push(Delivered {
                    seq: self.next_expected,
                    size,
                    tag,
                });
                self.next_expected += 1;
            }
        } else {
            self.out_of_order.insert(p.seq, (p.size, p.tag));
        }
        self.delivered_bytes += delivered.iter().map(|d| d.size as u64).sum::<u64>();
        ReceiveOutcome {
            ack: AckRecord {
                cumulative_ack: self.next_expected,
                pkt_num: p.pkt_num,
                seq: p.seq,
                ecn_ce_count: self.ce_count,
                recv_time: now,
            },
            duplicate,
            delivered,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::FlowId;

    fn pkt(seq: u64) -> Packet {
        Packet::new(FlowId(0), seq, 100, SimTime::ZERO)
    }

    #[test]
    fn reorders_and_dedups() {
        let mut r = Receiver::new();
        let t = SimTime::ZERO;
        assert_eq!(r.on_packet(&pkt(0), t).delivered.len(), 1);
        let o = r.on_packet(&pkt(2), t);
        assert!(o.delivered.is_empty());
        assert_eq!(o.ack.cumulative_ack, 1);
        let o = r.on_packet(&pkt(1), t);
        assert_eq!(o.delivered.iter().map(|d| d.seq).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(o.ack.cumulative_ack, 3);
        assert!(r.on_packet(&pkt(1), t).duplicate);
        assert_eq!(r.delivered_bytes(), 300);
    }

    #[test]
    fn ce_count_is_cumulative() {
        let mut r = Receiver::new();
        let t = SimTime::ZERO;
        r.on_packet(&pkt(0).with_ecn(Ecn::Ce), t);
        r.on_packet(&pkt(1).with_ecn(Ecn::Ect0), t);
        let o = r.on_packet(&pkt(2).with_ecn(Ecn::Ce), t);
        assert_eq!(o.ack.ecn_ce_count, 2);
    }
}
