use proptest::prelude::*;

use rlcsim::app::{abr_con_decide, AbrContext, AbrPolicy, ConPlus, Ladder};
use rlcsim::channel::ChannelTrace;
use rlcsim::packet::{Ecn, FlowId, Packet};
use rlcsim::queue::codel::control_law_spacing;
use rlcsim::queue::{
    l4s_mark_probability, red_act_probability, ActionMode, AqmConfig, CodelConfig, FlowQueue, L4sConfig, L4sState,
    RedConfig,
};
use rlcsim::scenario::load_scenario;
use rlcsim::sim::{Engine, SimTime};
use rlcsim::transport::Receiver;

fn aqm_strategy() -> impl Strategy<Value = AqmConfig> {
    let red = RedConfig {
        min_th: 20_000.0,
        max_th: 40_000.0,
        p_max: 0.2,
        w_q: 0.05,
    };
    prop_oneof![
        Just(AqmConfig::DropTail),
        Just(AqmConfig::Red(red)),
        Just(AqmConfig::Ared(rlcsim::queue::AredConfig::with_default_targets(red))),
        Just(AqmConfig::Codel(CodelConfig::new(SimTime::from_millis(2), SimTime::from_millis(20)))),
        Just(AqmConfig::L4s(L4sConfig::new(SimTime::from_millis(1), SimTime::from_millis(5)))),
    ]
}

#[derive(Clone, Debug)]
enum Op {
    Arrive { size: u32, ect: bool, gap_us: u64 },
    Serve { gap_us: u64 },
}

fn op_strategy() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (64u32..=1500, any::<bool>(), 0u64..400).prop_map(|(size, ect, gap_us)| Op::Arrive { size, ect, gap_us }),
        2 => (0u64..600).prop_map(|gap_us| Op::Serve { gap_us }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn queue_conserves_packets(
        aqm in aqm_strategy(),
        mark in any::<bool>(),
        ops in prop::collection::vec(op_strategy(), 1..600),
    ) {
        let mode = if mark { ActionMode::Mark } else { ActionMode::Drop };
        let mut q = FlowQueue::new(FlowId(0), 50_000, aqm, mode, 9).unwrap();
        let mut t = SimTime::ZERO;
        let mut seq = 0;
        let mut dropped = Vec::new();
        let mut delivered_ect_marks = 0;
        for op in ops {
            match op {
                Op::Arrive { size, ect, gap_us } => {
                    t = t + SimTime::from_micros(gap_us);
                    let ecn = if ect { Ecn::Ect0 } else { Ecn::NotEct };
                    q.enqueue(Packet::new(FlowId(0), seq, size, t).with_ecn(ecn), t);
                    seq += 1;
                }
                Op::Serve { gap_us } => {
                    t = t + SimTime::from_micros(gap_us);
                    if let Some(p) = q.dequeue(t, &mut dropped) {
                        if p.ecn == Ecn::Ce {
                            prop_assert!(mark, "CE only appears in mark mode");
                            delivered_ect_marks += 1;
                        }
                    }
                }
            }
            prop_assert!(q.occupancy() <= q.capacity());
            prop_assert!(q.counters().conserved(q.len() as u64));
        }
        if !mark {
            prop_assert_eq!(q.counters().marked, 0);
        }
        prop_assert!(delivered_ect_marks <= q.counters().marked);
    }

    #[test]
    fn red_probability_monotone_in_avg(a in 0.0f64..1.2e6, b in 0.0f64..1.2e6) {
        let cfg = RedConfig { min_th: 800_000.0, max_th: 1_000_000.0, p_max: 0.1, w_q: 0.002 };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (pl, ph) = (red_act_probability(lo, 0, &cfg), red_act_probability(hi, 0, &cfg));
        prop_assert!((0.0..=1.0).contains(&pl) && (0.0..=1.0).contains(&ph));
        prop_assert!(pl <= ph);
    }

    #[test]
    fn l4s_probability_is_a_probability(delays in prop::collection::vec(0u64..60_000, 1..200)) {
        let cfg = L4sConfig::new(SimTime::from_millis(10), SimTime::from_millis(25));
        let mut st = L4sState::default();
        for (i, d) in delays.into_iter().enumerate() {
            let q = SimTime::from_micros(d);
            let p = l4s_mark_probability(q, &cfg, &mut st, SimTime::from_micros(i as u64 * 700));
            prop_assert!((0.0..=1.0).contains(&p));
            if q <= cfg.low_th { prop_assert_eq!(p, 0.0); }
            if q >= cfg.high_th { prop_assert_eq!(p, 1.0); }
        }
    }

    #[test]
    fn codel_spacing_is_exact_floor(interval_ms in 1u64..500, count in 1u64..100_000) {
        let interval = SimTime::from_millis(interval_ms);
        let s = control_law_spacing(interval, count).as_nanos() as u128;
        let i = interval.as_nanos() as u128;
        prop_assert!(s * s * count as u128 <= i * i);
        prop_assert!((s + 1) * (s + 1) * count as u128 > i * i);
        prop_assert!(control_law_spacing(interval, count + 1) <= control_law_spacing(interval, count));
    }

    #[test]
    fn engine_fires_in_time_then_insertion_order(times in prop::collection::vec(0u64..50, 1..300)) {
        let mut eng: Engine<usize> = Engine::new();
        for (i, &t) in times.iter().enumerate() {
            eng.schedule(i, SimTime::from_micros(t)).unwrap();
        }
        let mut fired = Vec::new();
        eng.run_until(SimTime::from_millis(1), |e, i| fired.push((e.now(), i)));
        prop_assert_eq!(fired.len(), times.len());
        for w in fired.windows(2) {
            prop_assert!(w[0].0 < w[1].0 || (w[0].0 == w[1].0 && w[0].1 < w[1].1));
        }
    }

    #[test]
    fn receiver_delivers_everything_in_any_order(perm in Just((0u64..200).collect::<Vec<_>>()).prop_shuffle(), dup in 0usize..200) {
        let mut r = Receiver::new();
        let mut total = 0;
        for &s in perm.iter().chain(std::iter::once(&perm[dup % perm.len()])) {
            let out = r.on_packet(&Packet::new(FlowId(0), s, 1000, SimTime::ZERO), SimTime::ZERO);
            total += out.delivered.iter().map(|d| d.size as u64).sum::<u64>();
        }
        prop_assert_eq!(total, 200_000);
        prop_assert_eq!(r.next_expected(), 200);
        prop_assert_eq!(r.duplicates(), 1);
    }

    #[test]
    fn con_never_exceeds_budget(hist in prop::collection::vec(1e5f64..1e8, 0..6), safety in 0.5f64..1.0) {
        let ladder = Ladder::default();
        let l = abr_con_decide(&hist, &ladder, safety);
        if hist.is_empty() {
            prop_assert_eq!(l, 0);
        } else if l > 0 {
            let recent = &hist[hist.len().saturating_sub(2)..];
            let budget = safety * recent.iter().sum::<f64>() / recent.len() as f64;
            prop_assert!(ladder.level(l).bitrate_bps as f64 <= budget);
            if l < ladder.top() {
                prop_assert!(ladder.level(l + 1).bitrate_bps as f64 > budget);
            }
        }
    }

    #[test]
    fn con_plus_drops_to_lowest_on_thin_buffer(hist in prop::collection::vec(1e5f64..1e8, 1..6), buf_ms in 0u64..1999) {
        let ladder = Ladder::default();
        let ctx = AbrContext {
            history_bps: &hist,
            buffer: SimTime::from_millis(buf_ms),
            segment_duration: SimTime::from_secs(2),
            ladder: &ladder,
            last_level: None,
        };
        prop_assert_eq!(ConPlus { safety: 0.9 }.decide(&ctx), 0);
    }

    #[test]
    fn constant_trace_capacity_integral(cap_mbps in 1u64..1000, a_ms in 0u64..5000, len_ms in 0u64..5000) {
        let tr = ChannelTrace::constant(cap_mbps * 1_000_000, 4000);
        let from = SimTime::from_millis(a_ms);
        let to = SimTime::from_millis(a_ms + len_ms);
        let bits = tr.capacity_integral_bits(from, to);
        let want = cap_mbps as f64 * 1e6 * len_ms as f64 / 1e3;
        prop_assert!((bits - want).abs() <= 1e-6 * want.max(1.0));
    }
}

#[test]
fn config_hash_ignores_seed_only() {
    let mut s = load_scenario("table2-vbr").unwrap();
    let h = s.config_hash();
    s.seed = 99;
    assert_eq!(s.config_hash(), h);
    s.queue.codel_target_ms += 1.0;
    assert_ne!(s.config_hash(), h);
}
