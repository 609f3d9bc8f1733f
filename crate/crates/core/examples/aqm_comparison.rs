//! Paired runs of the LoS/NLoS VBR setup under each AQM, all with one seed.
//!
//! cargo run --release --example aqm_comparison [seed]

use rayon::prelude::*;
use rlcsim::queue::ActionMode;
use rlcsim::runner::simulate;
use rlcsim::scenario::{load_scenario, AqmKind, Scenario};

fn variant(base: &Scenario, aqm: AqmKind, mode: ActionMode) -> Scenario {
    let mut s = base.clone();
    s.queue.aqm = aqm;
    s.queue.mode = mode;
    s.queue.red_min_pct = if aqm == AqmKind::Ared { 90.0 } else { 80.0 };
    s.queue.codel_target_ms = 10.0;
    s.queue.l4s_low_ms = 10.0;
    s.queue.l4s_high_ms = 25.0;
    s.flow.ecn = mode == ActionMode::Mark;
    s
}

fn main() -> anyhow::Result<()> {
    let mut base = load_scenario("table2-vbr")?;
    if let Some(seed) = std::env::args().nth(1) {
        base.seed = seed.parse()?;
    }
    let mut runs = vec![variant(&base, AqmKind::Droptail, ActionMode::Drop)];
    for aqm in [AqmKind::Red, AqmKind::Ared, AqmKind::Codel, AqmKind::L4s] {
        runs.push(variant(&base, aqm, ActionMode::Drop));
        runs.push(variant(&base, aqm, ActionMode::Mark));
    }
    let results: Vec<_> = runs.par_iter().map(simulate).collect::<Result<_, _>>()?;

    println!("{:<9} {:<5} {:>12} {:>10} {:>9} {:>9} {:>8}", "aqm", "mode", "goodput_mb", "srtt_ms", "drop_aqm", "drop_ovf", "marks");
    for (s, out) in runs.iter().zip(&results) {
        let a = &out.results.aggregate;
        println!(
            "{:<9} {:<5} {:>12.2} {:>10.2} {:>9} {:>9} {:>8}",
            format!("{:?}", s.queue.aqm).to_lowercase(),
            format!("{:?}", s.queue.mode).to_lowercase(),
            a.goodput_bps / 1e6,
            a.srtt_us.as_ref().map_or(f64::NAN, |d| d.mean / 1e3),
            a.drops.aqm,
            a.drops.overflow,
            a.marks,
        );
    }
    Ok(())
}
