mod common;

use rlcsim::queue::{
    l4s_temp, red_act_probability, red_decision, update_avg, CodelConfig, L4sConfig, RedConfig, RedDecision,
    RedState,
};
use rlcsim::sim::{RandomStream, SimTime, StreamKind};

fn red_cfg() -> RedConfig {
    RedConfig {
        min_th: 800_000.0,
        max_th: 1_000_000.0,
        p_max: 0.1,
        w_q: 0.002,
    }
}

#[test]
fn red_probability_matches_reference_on_grid() {
    let cfg = red_cfg();
    let mut points = 0;
    for i in 0..=60 {
        let avg = 700_000.0 + i as f64 * 6_000.0;
        for count in 0..30u64 {
            let got = red_act_probability(avg, count, &cfg);
            let want = common::red_p_a(avg, count, cfg.min_th, cfg.max_th, cfg.p_max);
            assert_eq!(got, want, "avg {avg} count {count}");
            points += 1;
        }
    }
    assert!(points >= 1000);
}

#[test]
fn red_decision_follows_reference_coin() {
    let cfg = red_cfg();
    let mut lib = RandomStream::new(3, StreamKind::Test, 0);
    let mut reference = lib.clone();
    let mut state = RedState::default();
    let mut ref_count = 0u64;
    for i in 0..5000 {
        state.avg = 780_000.0 + (i % 250) as f64 * 1_000.0;
        let p = common::red_p_a(state.avg, ref_count, cfg.min_th, cfg.max_th, cfg.p_max);
        let act = if state.avg < cfg.min_th {
            ref_count = 0;
            false
        } else {
            let a = p >= 1.0 || (p > 0.0 && reference.uniform() < p);
            ref_count = if a { 0 } else { ref_count + 1 };
            a
        };
        let got = red_decision(&mut state, &cfg, &mut lib);
        assert_eq!(got == RedDecision::Act, act, "step {i}");
        assert_eq!(state.count, ref_count);
    }
}

#[test]
fn red_boundary_examples() {
    let cfg = red_cfg();
    assert_eq!(red_act_probability(cfg.min_th, 0, &cfg), 0.0);
    assert!((red_act_probability(900_000.0, 0, &cfg) - 0.05).abs() < 1e-15);
    assert_eq!(red_act_probability(cfg.max_th, 0, &cfg), 1.0);
    // count * p_b >= 1 saturates
    assert_eq!(red_act_probability(900_000.0, 20, &cfg), 1.0);
}

#[test]
fn ewma_matches_closed_form() {
    for &(avg0, len, w_q) in &[(0.0, 100.0, 0.002), (5e5, 1e4, 0.01), (1e6, 0.0, 0.5), (3.0, 7.0, 1.0)] {
        let mut avg = avg0;
        for n in 1..=2000u32 {
            avg = update_avg(avg, len, w_q);
            let want = common::ewma_closed_form(avg0, len, w_q, n);
            let scale = want.abs().max(1e-300);
            assert!((avg - want).abs() / scale <= 1e-9, "n {n}: {avg} vs {want}");
        }
    }
}

#[test]
fn l4s_temp_matches_ramp() {
    for &(lo, hi) in &[(10u64, 25u64), (1, 100), (10, 15)] {
        let cfg = L4sConfig::new(SimTime::from_millis(lo), SimTime::from_millis(hi));
        for us in (0..(hi + 5) * 1000).step_by(37) {
            let q = SimTime::from_micros(us);
            assert_eq!(
                l4s_temp(q, &cfg),
                common::l4s_ramp(q.as_nanos(), cfg.low_th.as_nanos(), cfg.high_th.as_nanos())
            );
        }
    }
}

#[test]
fn codel_drop_instants_match_rfc_oracle() {
    let link = 20_000_000;
    for seed in 0..10 {
        let trace = common::overload_trace(seed, 10_000, link);
        let (target, interval) = if seed % 2 == 0 { (5, 100) } else { (10, 50) };
        let cfg = CodelConfig::new(SimTime::from_millis(target), SimTime::from_millis(interval));
        let got = common::library_codel_drops(&trace, link, cfg);
        let want = common::oracle_codel_drops(&trace, link, target * 1_000_000, interval * 1_000_000, cfg.mtu_bytes);
        assert!(!want.is_empty(), "seed {seed} never dropped");
        assert_eq!(got, want, "seed {seed}");
    }
}
