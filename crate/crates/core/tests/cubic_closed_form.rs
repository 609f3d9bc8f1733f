mod common;

use rlcsim::transport::{cubic_k, cubic_window};

#[test]
fn window_matches_symbolic_curve() {
    let mss = 1200u32;
    for &w_max in &[12_000.0, 120_000.0, 1_000_000.0, 7_654_321.0] {
        let k = cubic_k(w_max, mss);
        assert!((k - common::cubic_k_symbolic(w_max, mss as f64)).abs() < 1e-12);
        let mut ts: Vec<f64> = (0..997).map(|i| i as f64 * 3.0 * k / 996.0).collect();
        ts.extend([0.0, k, 2.0 * k]);
        assert!(ts.len() >= 1000);
        for t in ts {
            let got = cubic_window(t, w_max, mss);
            let want = common::cubic_symbolic(t, w_max, mss as f64);
            assert!((got - want).abs() <= 1.0, "w_max {w_max} t {t}: {got} vs {want}");
        }
        assert!((cubic_window(k, w_max, mss) - w_max).abs() <= 1.0);
        assert!((cubic_window(0.0, w_max, mss) - (0.7 * w_max).max(mss as f64)).abs() <= 1.0);
    }
}
