//! Drives every queue discipline with the same overloaded arrival pattern and
//! a fixed-rate drain, in both drop and mark mode.

use rlcsim::packet::{Ecn, FlowId, Packet};
use rlcsim::queue::{
    ActionMode, AqmConfig, AredConfig, CodelConfig, FlowQueue, L4sConfig, RedConfig,
};
use rlcsim::sim::{RandomStream, SimTime, StreamKind};

fn main() {
    let cap = 300_000u64;
    let red = RedConfig { min_th: 0.5 * cap as f64, max_th: cap as f64, p_max: 0.1, w_q: 0.002 };
    let aqms = [
        AqmConfig::DropTail,
        AqmConfig::Red(red),
        AqmConfig::Ared(AredConfig::with_default_targets(red)),
        AqmConfig::Codel(CodelConfig::new(SimTime::from_millis(10), SimTime::from_millis(100))),
        AqmConfig::L4s(L4sConfig::new(SimTime::from_millis(10), SimTime::from_millis(25))),
    ];
    // 30 Mb/s offered into a 20 Mb/s drain for 5 s.
    let serve = SimTime::from_nanos(1200 * 8 * 1_000_000_000 / 20_000_000);
    let gap = SimTime::from_nanos(1200 * 8 * 1_000_000_000 / 30_000_000);
    println!("{:<9} {:<5} {:>9} {:>9} {:>9} {:>7} {:>12}", "aqm", "mode", "delivered", "drop_aqm", "overflow", "marked", "mean_qd_ms");
    for aqm in aqms {
        for mode in [ActionMode::Drop, ActionMode::Mark] {
            let mut q = FlowQueue::new(FlowId(0), cap, aqm, mode, 1).unwrap();
            let mut jitter = RandomStream::new(1, StreamKind::Test, 0);
            let (mut next_arrival, mut next_serve) = (SimTime::ZERO, SimTime::ZERO);
            let (mut seq, mut qd_sum, mut delivered) = (0u64, 0.0, 0u64);
            let mut dropped = Vec::new();
            let mut next_tick = q.ared_interval();
            let end = SimTime::from_secs(5);
            while next_arrival < end || next_serve < end {
                if let Some(t) = next_tick.filter(|&t| t <= next_arrival.min(next_serve)) {
                    q.ared_tick();
                    next_tick = q.ared_interval().map(|iv| t + iv);
                    continue;
                }
                if next_arrival <= next_serve {
                    let p = Packet::new(FlowId(0), seq, 1200, next_arrival).with_ecn(Ecn::Ect0);
                    q.enqueue(p, next_arrival);
                    seq += 1;
                    next_arrival = next_arrival + SimTime::from_nanos((gap.as_nanos() as f64 * 2.0 * jitter.uniform()) as u64);
                } else {
                    if let Some(p) = q.dequeue(next_serve, &mut dropped) {
                        qd_sum += (next_serve - p.enqueued_at).as_millis_f64();
                        delivered += 1;
                    }
                    next_serve = next_serve + serve;
                }
            }
            let c = q.counters();
            println!(
                "{:<9} {:<5} {:>9} {:>9} {:>9} {:>7} {:>12.2}",
                aqm.name(),
                format!("{mode:?}").to_lowercase(),
                c.delivered,
                c.dropped_aqm,
                c.dropped_overflow,
                c.marked,
                qd_sum / delivered.max(1) as f64
            );
        }
    }
}
