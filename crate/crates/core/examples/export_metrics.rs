//! Runs a preset and prints its results in both export formats.
//!
//! cargo run --release --example export_metrics [preset]

use rlcsim::metrics::{export, ExportFormat};
use rlcsim::runner::simulate;
use rlcsim::scenario::load_scenario;

fn main() -> anyhow::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "fig5-ecn".into());
    let out = simulate(&load_scenario(&name)?)?;
    print!("{}", String::from_utf8(export(&out.results, ExportFormat::Csv)?)?);
    println!();
    print!("{}", String::from_utf8(export(&out.results, ExportFormat::Json)?)?);
    Ok(())
}
