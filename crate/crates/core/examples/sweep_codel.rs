//! Runs the shipped CoDel target sweep into a temporary directory and
//! prints its summary rows.

use rlcsim::runner::{load_sweep, run_sweep};

fn main() -> anyhow::Result<()> {
    let sweep = load_sweep("codel-target")?;
    let root = std::env::temp_dir().join("rlcsim-sweep-example");
    let (dir, rows) = run_sweep(&sweep, &root, 4)?;
    for r in &rows {
        println!(
            "target {:>4} ms  goodput {:7.2} Mb/s  sRTT {:6.2} ms{}",
            r.value,
            r.goodput_bps / 1e6,
            r.mean_srtt_us.unwrap_or(f64::NAN) / 1e3,
            if r.best { "  <- best" } else { "" }
        );
    }
    println!("written to {}", dir.display());
    Ok(())
}
